#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "msissa/rng.hpp"

namespace msissa {

inline constexpr double kPi = 3.14159265358979323846;

// Step-length families. All parameters are in map units.
struct ExponentialStep {
  double rate;
};
struct GammaStep {
  double shape;
  double rate;
};
/// Log-normal with log-scale mean `mu` and log-scale variance `sigma2`.
struct LogNormalStep {
  double mu;
  double sigma2;
};
using StepDistribution = std::variant<ExponentialStep, GammaStep, LogNormalStep>;

// Turning-angle families on (-pi, pi]. The von Mises mean is fixed at 0.
struct UniformTurn {};
struct VonMisesTurn {
  double kappa;
};
using TurnDistribution = std::variant<UniformTurn, VonMisesTurn>;

enum class StepFamily { Exponential, Gamma, LogNormal };
enum class TurnFamily { Uniform, VonMises };

StepFamily family_of(const StepDistribution& d);
TurnFamily family_of(const TurnDistribution& d);
std::string to_string(StepFamily f);
std::string to_string(TurnFamily f);
StepFamily step_family_from_string(const std::string& s);
TurnFamily turn_family_from_string(const std::string& s);

/// Chooses the movement covariate vector C and hence the length and order of
/// the movement coefficient vector theta: step terms first, then cos(alpha).
struct MovementKernelSpec {
  StepFamily step = StepFamily::Gamma;
  TurnFamily turn = TurnFamily::VonMises;

  std::size_t n_step_coef() const;
  std::size_t n_coef() const;
  /// Covariate names: log_l, neg_l, neg_log_l_sq, cos_alpha.
  std::vector<std::string> covariate_names() const;
  /// Natural parameter names in the order used by natural_values().
  std::vector<std::string> natural_names() const;

  bool operator==(const MovementKernelSpec&) const = default;
};

/// Natural-scale movement kernel of one state.
struct NaturalKernel {
  StepDistribution step;
  TurnDistribution turn;
};

/// Flattens a kernel to the order of MovementKernelSpec::natural_names().
std::vector<double> natural_values(const NaturalKernel& k);
NaturalKernel kernel_from_values(const MovementKernelSpec& spec, std::span<const double> values);

enum class SchemeKind { Importance, UniformSteps, Grid };
std::string to_string(SchemeKind k);
SchemeKind scheme_kind_from_string(const std::string& s);

/// How control steps were generated; fixes the coefficient interpretation.
///
/// Importance: step lengths from `step_proposal`; turning angles from
/// `turn_proposal` when set, else uniform. UniformSteps: l ~ U(0, max_step],
/// alpha ~ U(-pi, pi]. Grid: cell centres spaced `grid_resolution` apart
/// within `grid_radius` of the current location.
struct SamplingScheme {
  SchemeKind kind = SchemeKind::Importance;
  std::optional<StepDistribution> step_proposal;
  std::optional<VonMisesTurn> turn_proposal;
  double max_step = 0.0;
  double grid_resolution = 1.0;
  double grid_radius = 0.0;

  static SamplingScheme importance(StepDistribution step,
                                   std::optional<VonMisesTurn> turn = std::nullopt);
  static SamplingScheme uniform_steps(double max_step);
  /// UniformSteps with max_step at the given quantile of a fitted proposal.
  static SamplingScheme uniform_from_proposal(const StepDistribution& proposal,
                                              double quantile = 0.999);
  static SamplingScheme grid(double resolution, double radius);

  void validate(const MovementKernelSpec& spec) const;
  /// True when -log(l) enters the linear predictor as an offset. Only the
  /// grid scheme needs it, and only for step families without a log(l) term.
  bool has_offset(const MovementKernelSpec& spec) const;
};

/// Writes C(l, alpha) into `out` (size spec.n_coef()).
void movement_covariates(const MovementKernelSpec& spec, double l, double alpha,
                         std::span<double> out);
std::vector<double> movement_covariates(const MovementKernelSpec& spec, double l, double alpha);

/// Regression coefficients -> natural parameters for the given scheme.
/// Throws InvalidParameterError naming the first parameter that leaves its domain.
NaturalKernel coef_to_natural(const MovementKernelSpec& spec, const SamplingScheme& scheme,
                              std::span<const double> theta);
/// Exact inverse of coef_to_natural.
std::vector<double> natural_to_coef(const MovementKernelSpec& spec, const SamplingScheme& scheme,
                                    const NaturalKernel& natural);

void validate(const StepDistribution& d);
void validate(const TurnDistribution& d);

double step_logpdf(const StepDistribution& d, double l);
double turn_logpdf(const TurnDistribution& d, double alpha);
double step_mean(const StepDistribution& d);
double step_variance(const StepDistribution& d);
double step_quantile(const StepDistribution& d, double p);

/// Marsaglia-Tsang squeeze for the gamma family; inversion for exponential.
double step_sample(const StepDistribution& d, Rng& rng);
/// Best-Fisher rejection for von Mises.
double turn_sample(const TurnDistribution& d, Rng& rng);

/// Maximum-likelihood fits. At least 10 finite observations are required.
StepDistribution fit_step_mle(StepFamily family, std::span<const double> lengths);
/// Method-of-moments alternative to fit_step_mle.
StepDistribution fit_step_moments(StepFamily family, std::span<const double> lengths);
TurnDistribution fit_turn_mle(TurnFamily family, std::span<const double> angles);

double step_loglik(const StepDistribution& d, std::span<const double> lengths);
double turn_loglik(const TurnDistribution& d, std::span<const double> angles);

/// Maps any angle to (-pi, pi].
double wrap_angle(double a);
bool is_valid_angle(double a);
double log_bessel_i0(double x);
/// I1(x) / I0(x).
double bessel_ratio(double x);

}  // namespace msissa
