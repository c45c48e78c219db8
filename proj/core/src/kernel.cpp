#include "msissa/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "msissa/error.hpp"

namespace msissa {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void require_positive(const char* name, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) throw InvalidParameterError(name, v);
}

void require_finite(const char* name, double v) {
  if (!std::isfinite(v)) throw InvalidParameterError(name, v);
}

bool importance_turn(const SamplingScheme& s) {
  return s.kind == SchemeKind::Importance && s.turn_proposal.has_value();
}

const StepDistribution& proposal_step(const SamplingScheme& s) {
  if (!s.step_proposal) throw ValidationError("importance scheme requires a step proposal");
  return *s.step_proposal;
}

// Constant added to theta_log(l) for uniform (1) and grid (2) sampling.
double log_l_shift(SchemeKind k) { return k == SchemeKind::Grid ? 2.0 : 1.0; }

}  // namespace

StepFamily family_of(const StepDistribution& d) {
  return std::visit(overloaded{[](const ExponentialStep&) { return StepFamily::Exponential; },
                               [](const GammaStep&) { return StepFamily::Gamma; },
                               [](const LogNormalStep&) { return StepFamily::LogNormal; }},
                    d);
}

TurnFamily family_of(const TurnDistribution& d) {
  return std::holds_alternative<VonMisesTurn>(d) ? TurnFamily::VonMises : TurnFamily::Uniform;
}

std::string to_string(StepFamily f) {
  switch (f) {
    case StepFamily::Exponential: return "exponential";
    case StepFamily::Gamma: return "gamma";
    case StepFamily::LogNormal: return "lognormal";
  }
  return {};
}

std::string to_string(TurnFamily f) { return f == TurnFamily::VonMises ? "vonmises" : "uniform"; }

StepFamily step_family_from_string(const std::string& s) {
  if (s == "exponential") return StepFamily::Exponential;
  if (s == "gamma") return StepFamily::Gamma;
  if (s == "lognormal") return StepFamily::LogNormal;
  throw ValidationError("unsupported step-length family '" + s +
                        "' (expected exponential, gamma or lognormal)");
}

TurnFamily turn_family_from_string(const std::string& s) {
  if (s == "uniform") return TurnFamily::Uniform;
  if (s == "vonmises") return TurnFamily::VonMises;
  throw ValidationError("unsupported turning-angle family '" + s +
                        "' (expected uniform or vonmises)");
}

std::string to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::Importance: return "importance";
    case SchemeKind::UniformSteps: return "uniform";
    case SchemeKind::Grid: return "grid";
  }
  return {};
}

SchemeKind scheme_kind_from_string(const std::string& s) {
  if (s == "importance") return SchemeKind::Importance;
  if (s == "uniform") return SchemeKind::UniformSteps;
  if (s == "grid") return SchemeKind::Grid;
  throw ValidationError("unknown sampling scheme '" + s + "'");
}

std::size_t MovementKernelSpec::n_step_coef() const {
  switch (step) {
    case StepFamily::Exponential: return 1;
    case StepFamily::Gamma:
    case StepFamily::LogNormal: return 2;
  }
  return 0;
}

std::size_t MovementKernelSpec::n_coef() const {
  return n_step_coef() + (turn == TurnFamily::VonMises ? 1 : 0);
}

std::vector<std::string> MovementKernelSpec::covariate_names() const {
  std::vector<std::string> names;
  switch (step) {
    case StepFamily::Exponential: names = {"neg_l"}; break;
    case StepFamily::Gamma: names = {"log_l", "neg_l"}; break;
    case StepFamily::LogNormal: names = {"log_l", "neg_log_l_sq"}; break;
  }
  if (turn == TurnFamily::VonMises) names.emplace_back("cos_alpha");
  return names;
}

std::vector<std::string> MovementKernelSpec::natural_names() const {
  std::vector<std::string> names;
  switch (step) {
    case StepFamily::Exponential: names = {"rate"}; break;
    case StepFamily::Gamma: names = {"shape", "rate"}; break;
    case StepFamily::LogNormal: names = {"mu", "sigma2"}; break;
  }
  if (turn == TurnFamily::VonMises) names.emplace_back("kappa");
  return names;
}

std::vector<double> natural_values(const NaturalKernel& k) {
  std::vector<double> v = std::visit(
      overloaded{[](const ExponentialStep& s) { return std::vector<double>{s.rate}; },
                 [](const GammaStep& s) { return std::vector<double>{s.shape, s.rate}; },
                 [](const LogNormalStep& s) { return std::vector<double>{s.mu, s.sigma2}; }},
      k.step);
  if (const auto* vm = std::get_if<VonMisesTurn>(&k.turn)) v.push_back(vm->kappa);
  return v;
}

NaturalKernel kernel_from_values(const MovementKernelSpec& spec, std::span<const double> v) {
  if (v.size() != spec.n_coef()) throw ValidationError("natural parameter vector has wrong length");
  NaturalKernel k{GammaStep{1.0, 1.0}, UniformTurn{}};
  switch (spec.step) {
    case StepFamily::Exponential: k.step = ExponentialStep{v[0]}; break;
    case StepFamily::Gamma: k.step = GammaStep{v[0], v[1]}; break;
    case StepFamily::LogNormal: k.step = LogNormalStep{v[0], v[1]}; break;
  }
  if (spec.turn == TurnFamily::VonMises) k.turn = VonMisesTurn{v[spec.n_step_coef()]};
  return k;
}

SamplingScheme SamplingScheme::importance(StepDistribution step, std::optional<VonMisesTurn> turn) {
  SamplingScheme s;
  s.kind = SchemeKind::Importance;
  s.step_proposal = step;
  s.turn_proposal = turn;
  return s;
}

SamplingScheme SamplingScheme::uniform_steps(double max_step) {
  SamplingScheme s;
  s.kind = SchemeKind::UniformSteps;
  s.max_step = max_step;
  return s;
}

SamplingScheme SamplingScheme::uniform_from_proposal(const StepDistribution& proposal,
                                                     double quantile) {
  return uniform_steps(step_quantile(proposal, quantile));
}

SamplingScheme SamplingScheme::grid(double resolution, double radius) {
  SamplingScheme s;
  s.kind = SchemeKind::Grid;
  s.grid_resolution = resolution;
  s.grid_radius = radius;
  return s;
}

void SamplingScheme::validate(const MovementKernelSpec& spec) const {
  switch (kind) {
    case SchemeKind::Importance:
      msissa::validate(proposal_step(*this));
      if (family_of(*step_proposal) != spec.step)
        throw ValidationError("step proposal family must match the kernel's step family");
      if (turn_proposal) {
        if (spec.turn != TurnFamily::VonMises)
          throw ValidationError("von Mises turn proposal requires a von Mises kernel");
        msissa::validate(TurnDistribution{*turn_proposal});
      }
      break;
    case SchemeKind::UniformSteps:
      require_positive("max_step", max_step);
      break;
    case SchemeKind::Grid:
      require_positive("grid_resolution", grid_resolution);
      require_positive("grid_radius", grid_radius);
      break;
  }
}

bool SamplingScheme::has_offset(const MovementKernelSpec& spec) const {
  return kind == SchemeKind::Grid && spec.step == StepFamily::Exponential;
}

void movement_covariates(const MovementKernelSpec& spec, double l, double alpha,
                         std::span<double> out) {
  if (!(l > 0.0) || !std::isfinite(l)) throw ValidationError("step length must be positive");
  if (!is_valid_angle(alpha)) throw ValidationError("turning angle must lie in (-pi, pi]");
  if (out.size() != spec.n_coef()) throw ValidationError("covariate buffer has wrong length");
  switch (spec.step) {
    case StepFamily::Exponential:
      out[0] = -l;
      break;
    case StepFamily::Gamma:
      out[0] = std::log(l);
      out[1] = -l;
      break;
    case StepFamily::LogNormal: {
      const double ll = std::log(l);
      out[0] = ll;
      out[1] = -ll * ll;
      break;
    }
  }
  if (spec.turn == TurnFamily::VonMises) out[spec.n_step_coef()] = std::cos(alpha);
}

std::vector<double> movement_covariates(const MovementKernelSpec& spec, double l, double alpha) {
  std::vector<double> c(spec.n_coef());
  movement_covariates(spec, l, alpha, c);
  return c;
}

NaturalKernel coef_to_natural(const MovementKernelSpec& spec, const SamplingScheme& scheme,
                              std::span<const double> theta) {
  if (theta.size() != spec.n_coef())
    throw ValidationError("movement coefficient vector has length " +
                          std::to_string(theta.size()) + ", expected " +
                          std::to_string(spec.n_coef()));
  for (double t : theta) require_finite("theta", t);
  scheme.validate(spec);
  const bool imp = scheme.kind == SchemeKind::Importance;

  NaturalKernel k{GammaStep{1.0, 1.0}, UniformTurn{}};
  switch (spec.step) {
    case StepFamily::Exponential: {
      double rate = theta[0];
      if (imp) rate += std::get<ExponentialStep>(proposal_step(scheme)).rate;
      require_positive("rate", rate);
      k.step = ExponentialStep{rate};
      break;
    }
    case StepFamily::Gamma: {
      double shape, rate;
      if (imp) {
        const auto& p = std::get<GammaStep>(proposal_step(scheme));
        shape = theta[0] + p.shape;
        rate = theta[1] + p.rate;
      } else {
        shape = theta[0] + log_l_shift(scheme.kind);
        rate = theta[1];
      }
      require_positive("shape", shape);
      require_positive("rate", rate);
      k.step = GammaStep{shape, rate};
      break;
    }
    case StepFamily::LogNormal: {
      double a = theta[0], b = theta[1];
      if (imp) {
        const auto& p = std::get<LogNormalStep>(proposal_step(scheme));
        a += p.mu / p.sigma2;
        b += 1.0 / (2.0 * p.sigma2);
      } else {
        a += log_l_shift(scheme.kind);
      }
      require_positive("sigma2", b);
      k.step = LogNormalStep{a / (2.0 * b), 1.0 / (2.0 * b)};
      break;
    }
  }
  if (spec.turn == TurnFamily::VonMises) {
    double kappa = theta[spec.n_step_coef()];
    if (importance_turn(scheme)) kappa += scheme.turn_proposal->kappa;
    if (!(kappa >= 0.0)) throw InvalidParameterError("kappa", kappa);
    k.turn = VonMisesTurn{kappa};
  }
  return k;
}

std::vector<double> natural_to_coef(const MovementKernelSpec& spec, const SamplingScheme& scheme,
                                    const NaturalKernel& natural) {
  if (family_of(natural.step) != spec.step || family_of(natural.turn) != spec.turn)
    throw ValidationError("natural kernel does not match the kernel spec");
  validate(natural.step);
  validate(natural.turn);
  scheme.validate(spec);
  const bool imp = scheme.kind == SchemeKind::Importance;

  std::vector<double> theta(spec.n_coef());
  switch (spec.step) {
    case StepFamily::Exponential: {
      theta[0] = std::get<ExponentialStep>(natural.step).rate;
      if (imp) theta[0] -= std::get<ExponentialStep>(proposal_step(scheme)).rate;
      break;
    }
    case StepFamily::Gamma: {
      const auto& g = std::get<GammaStep>(natural.step);
      if (imp) {
        const auto& p = std::get<GammaStep>(proposal_step(scheme));
        theta[0] = g.shape - p.shape;
        theta[1] = g.rate - p.rate;
      } else {
        theta[0] = g.shape - log_l_shift(scheme.kind);
        theta[1] = g.rate;
      }
      break;
    }
    case StepFamily::LogNormal: {
      const auto& g = std::get<LogNormalStep>(natural.step);
      theta[0] = g.mu / g.sigma2;
      theta[1] = 1.0 / (2.0 * g.sigma2);
      if (imp) {
        const auto& p = std::get<LogNormalStep>(proposal_step(scheme));
        theta[0] -= p.mu / p.sigma2;
        theta[1] -= 1.0 / (2.0 * p.sigma2);
      } else {
        theta[0] -= log_l_shift(scheme.kind);
      }
      break;
    }
  }
  if (spec.turn == TurnFamily::VonMises) {
    double t = std::get<VonMisesTurn>(natural.turn).kappa;
    if (importance_turn(scheme)) t -= scheme.turn_proposal->kappa;
    theta[spec.n_step_coef()] = t;
  }
  return theta;
}

void validate(const StepDistribution& d) {
  std::visit(overloaded{[](const ExponentialStep& s) { require_positive("rate", s.rate); },
                        [](const GammaStep& s) {
                          require_positive("shape", s.shape);
                          require_positive("rate", s.rate);
                        },
                        [](const LogNormalStep& s) {
                          require_finite("mu", s.mu);
                          require_positive("sigma2", s.sigma2);
                        }},
             d);
}

void validate(const TurnDistribution& d) {
  if (const auto* vm = std::get_if<VonMisesTurn>(&d)) {
    if (!(vm->kappa >= 0.0) || !std::isfinite(vm->kappa))
      throw InvalidParameterError("kappa", vm->kappa);
  }
}

double step_logpdf(const StepDistribution& d, double l) {
  if (!(l > 0.0) || !std::isfinite(l)) throw ValidationError("step length must be positive");
  return std::visit(
      overloaded{[l](const ExponentialStep& s) { return std::log(s.rate) - s.rate * l; },
                 [l](const GammaStep& s) {
                   return s.shape * std::log(s.rate) - std::lgamma(s.shape) +
                          (s.shape - 1.0) * std::log(l) - s.rate * l;
                 },
                 [l](const LogNormalStep& s) {
                   const double z = std::log(l) - s.mu;
                   return -0.5 * z * z / s.sigma2 - std::log(l) -
                          0.5 * std::log(2.0 * kPi * s.sigma2);
                 }},
      d);
}

double turn_logpdf(const TurnDistribution& d, double alpha) {
  if (!is_valid_angle(alpha)) throw ValidationError("turning angle must lie in (-pi, pi]");
  if (const auto* vm = std::get_if<VonMisesTurn>(&d)) {
    return vm->kappa * std::cos(alpha) - std::log(2.0 * kPi) - log_bessel_i0(vm->kappa);
  }
  return -std::log(2.0 * kPi);
}

double step_mean(const StepDistribution& d) {
  return std::visit(
      overloaded{[](const ExponentialStep& s) { return 1.0 / s.rate; },
                 [](const GammaStep& s) { return s.shape / s.rate; },
                 [](const LogNormalStep& s) { return std::exp(s.mu + 0.5 * s.sigma2); }},
      d);
}

double step_variance(const StepDistribution& d) {
  return std::visit(overloaded{[](const ExponentialStep& s) { return 1.0 / (s.rate * s.rate); },
                               [](const GammaStep& s) { return s.shape / (s.rate * s.rate); },
                               [](const LogNormalStep& s) {
                                 return std::expm1(s.sigma2) * std::exp(2.0 * s.mu + s.sigma2);
                               }},
                    d);
}

double step_quantile(const StepDistribution& d, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("quantile level must lie in (0, 1)");
  validate(d);
  return std::visit(overloaded{[p](const ExponentialStep& s) { return -std::log1p(-p) / s.rate; },
                               [p](const GammaStep& s) {
                                 boost::math::gamma_distribution<> g(s.shape, 1.0 / s.rate);
                                 return boost::math::quantile(g, p);
                               },
                               [p](const LogNormalStep& s) {
                                 boost::math::normal_distribution<> n(s.mu, std::sqrt(s.sigma2));
                                 return std::exp(boost::math::quantile(n, p));
                               }},
                    d);
}

namespace {

double sample_gamma_unit(double shape, Rng& rng) {
  if (shape < 1.0) {
    const double u = rng.uniform_pos();
    return sample_gamma_unit(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_pos();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double sample_von_mises(double kappa, Rng& rng) {
  if (kappa < 1e-8) return kPi - 2.0 * kPi * rng.uniform();
  const double a = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  const double b = (a - std::sqrt(2.0 * a)) / (2.0 * kappa);
  const double r = (1.0 + b * b) / (2.0 * b);
  for (;;) {
    const double u1 = rng.uniform();
    const double u2 = rng.uniform_pos();
    const double u3 = rng.uniform();
    const double z = std::cos(kPi * u1);
    const double f = (1.0 + r * z) / (r + z);
    const double c = kappa * (r - f);
    if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
      const double theta = std::acos(std::clamp(f, -1.0, 1.0));
      return u3 > 0.5 ? theta : -theta;
    }
  }
}

void check_sample(std::span<const double> xs, bool positive) {
  if (xs.size() < 10) throw ValidationError("at least 10 observations are required for a fit");
  for (double x : xs) {
    if (!std::isfinite(x)) throw ValidationError("non-finite observation");
    if (positive && !(x > 0.0)) throw ValidationError("step lengths must be positive");
  }
}

double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

double step_sample(const StepDistribution& d, Rng& rng) {
  return std::visit(
      overloaded{[&rng](const ExponentialStep& s) { return -std::log(rng.uniform_pos()) / s.rate; },
                 [&rng](const GammaStep& s) { return sample_gamma_unit(s.shape, rng) / s.rate; },
                 [&rng](const LogNormalStep& s) {
                   return std::exp(s.mu + std::sqrt(s.sigma2) * rng.normal());
                 }},
      d);
}

double turn_sample(const TurnDistribution& d, Rng& rng) {
  if (const auto* vm = std::get_if<VonMisesTurn>(&d)) return sample_von_mises(vm->kappa, rng);
  return kPi - 2.0 * kPi * rng.uniform();
}

StepDistribution fit_step_moments(StepFamily family, std::span<const double> lengths) {
  check_sample(lengths, true);
  const double n = static_cast<double>(lengths.size());
  const double m = mean_of(lengths);
  double ss = 0.0;
  for (double l : lengths) ss += (l - m) * (l - m);
  const double var = ss / n;
  if (!(var > 0.0)) throw ValidationError("degenerate data: all step lengths are equal");
  switch (family) {
    case StepFamily::Exponential: return ExponentialStep{1.0 / m};
    case StepFamily::Gamma: return GammaStep{m * m / var, m / var};
    case StepFamily::LogNormal: {
      const double s2 = std::log1p(var / (m * m));
      return LogNormalStep{std::log(m) - 0.5 * s2, s2};
    }
  }
  return GammaStep{1.0, 1.0};
}

StepDistribution fit_step_mle(StepFamily family, std::span<const double> lengths) {
  check_sample(lengths, true);
  const double n = static_cast<double>(lengths.size());
  const double m = mean_of(lengths);
  double mean_log = 0.0;
  for (double l : lengths) mean_log += std::log(l);
  mean_log /= n;
  const auto [lo, hi] = std::minmax_element(lengths.begin(), lengths.end());
  if (*lo == *hi) throw ValidationError("degenerate data: all step lengths are equal");

  switch (family) {
    case StepFamily::Exponential: return ExponentialStep{1.0 / m};
    case StepFamily::LogNormal: {
      double ss = 0.0;
      for (double l : lengths) ss += (std::log(l) - mean_log) * (std::log(l) - mean_log);
      return LogNormalStep{mean_log, ss / n};
    }
    case StepFamily::Gamma: {
      // Solve log(k) - digamma(k) = s by Newton in log k.
      const double s = std::log(m) - mean_log;
      if (!(s > 0.0)) throw ValidationError("degenerate data: no gamma MLE");
      double k = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
      for (int it = 0; it < 100; ++it) {
        const double g = std::log(k) - boost::math::digamma(k) - s;
        const double dg = 1.0 / k - boost::math::trigamma(k);
        double next = k - g / dg;
        if (!(next > 0.0)) next = 0.5 * k;
        const bool done = std::abs(next - k) <= 1e-14 * k;
        k = next;
        if (done) break;
      }
      return GammaStep{k, k / m};
    }
  }
  return GammaStep{1.0, 1.0};
}

TurnDistribution fit_turn_mle(TurnFamily family, std::span<const double> angles) {
  check_sample(angles, false);
  for (double a : angles)
    if (!is_valid_angle(a)) throw ValidationError("turning angle must lie in (-pi, pi]");
  if (family == TurnFamily::Uniform) return UniformTurn{};

  double rbar = 0.0;
  for (double a : angles) rbar += std::cos(a);
  rbar /= static_cast<double>(angles.size());
  if (rbar <= 0.0) return VonMisesTurn{0.0};
  if (rbar >= 1.0 - 1e-12) throw ValidationError("degenerate data: all turning angles are zero");

  // A(kappa) = I1/I0 is increasing; Newton from the Best-Fisher approximation
  // with bisection fallback on a bracket.
  double k = rbar < 0.53   ? 2.0 * rbar + rbar * rbar * rbar + 5.0 * std::pow(rbar, 5) / 6.0
             : rbar < 0.85 ? -0.4 + 1.39 * rbar + 0.43 / (1.0 - rbar)
                           : 1.0 / (rbar * rbar * rbar - 4.0 * rbar * rbar + 3.0 * rbar);
  double lo = 0.0, hi = std::max(2.0 * k, 1.0);
  while (bessel_ratio(hi) < rbar) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double a = bessel_ratio(k);
    const double f = a - rbar;
    if (f > 0.0) hi = k; else lo = k;
    const double df = 1.0 - a / k - a * a;
    double next = k - f / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - k) <= 1e-14 * std::max(1.0, k)) {
      k = next;
      break;
    }
    k = next;
  }
  return VonMisesTurn{k};
}

double step_loglik(const StepDistribution& d, std::span<const double> lengths) {
  double s = 0.0;
  for (double l : lengths) s += step_logpdf(d, l);
  return s;
}

double turn_loglik(const TurnDistribution& d, std::span<const double> angles) {
  double s = 0.0;
  for (double a : angles) s += turn_logpdf(d, a);
  return s;
}

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

bool is_valid_angle(double a) { return std::isfinite(a) && a > -kPi && a <= kPi; }

double log_bessel_i0(double x) {
  x = std::abs(x);
  if (x < 500.0) return std::log(std::cyl_bessel_i(0.0, x));
  const double ix = 1.0 / x;
  return x - 0.5 * std::log(2.0 * kPi * x) +
         std::log1p(ix / 8.0 + 9.0 * ix * ix / 128.0 + 225.0 * ix * ix * ix / 3072.0);
}

double bessel_ratio(double x) {
  if (x == 0.0) return 0.0;
  if (x < 500.0) return std::cyl_bessel_i(1.0, x) / std::cyl_bessel_i(0.0, x);
  const double ix = 1.0 / x;
  return 1.0 - 0.5 * ix - 0.125 * ix * ix - 0.125 * ix * ix * ix;
}

}  // namespace msissa
