#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "msissa/hmm.hpp"
#include "msissa/kernel.hpp"
#include "msissa/optimizer.hpp"
#include "msissa/sampling.hpp"

namespace msissa {

/// How the initial state distribution of every burst is obtained.
enum class DeltaMode { Uniform, Stationary, Estimated };
std::string to_string(DeltaMode m);
DeltaMode delta_mode_from_string(const std::string& s);

/// Solves delta' Gamma = delta', sum(delta) = 1. Throws NumericError when the
/// chain is reducible (the balance system is singular).
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& gamma);

/// Regression-scale coefficients of one state.
struct StateCoefficients {
  std::vector<double> theta;  // movement coefficients, ordered as the kernel covariates
  std::vector<double> beta;   // selection coefficients, one per habitat covariate
};

struct MsParams {
  Eigen::MatrixXd gamma;
  DeltaMode delta_mode = DeltaMode::Uniform;
  Eigen::VectorXd delta;  // used when delta_mode == Estimated
  std::vector<StateCoefficients> states;

  int n_states() const { return static_cast<int>(states.size()); }
  Eigen::VectorXd initial() const;
  /// theta followed by beta for state i.
  Eigen::VectorXd coef(int i) const;
  void validate(std::size_t p, std::size_t q) const;
};

/// Log choice probabilities of every alternative of one choice set in state i.
Eigen::VectorXd choice_logprobs(const MsParams& params, int state, const CaseControlData& data,
                                std::size_t set);

/// log p(case) for every choice set (rows) and state (columns).
Eigen::MatrixXd case_logprobs(const MsParams& params, const CaseControlData& data);
/// Same, for a single coefficient vector (theta then beta).
Eigen::VectorXd case_logprobs(const Eigen::VectorXd& coef, const CaseControlData& data);

double forward_loglik(const MsParams& params, const CaseControlData& data);

/// Most probable state per choice set (0-based), bursts decoded independently.
std::vector<int> viterbi(const MsParams& params, const CaseControlData& data);

/// Maps between MsParams and the unconstrained working vector. Per state:
/// positive natural movement parameters on the log scale (log-normal mu
/// raw), then beta unless fixed at zero. Then N - 1 logits per Gamma row
/// with the diagonal as reference, then N - 1 logits for delta (state 1 as
/// reference) when it is estimated.
class Parameterization {
 public:
  Parameterization(MovementKernelSpec kernel, SamplingScheme scheme, int n_states, std::size_t q,
                   DeltaMode delta_mode, bool beta_fixed_zero = false);

  std::size_t size() const { return size_; }
  int n_states() const { return n_states_; }
  std::size_t state_offset(int i) const { return static_cast<std::size_t>(i) * per_state_; }
  std::size_t per_state() const { return per_state_; }
  /// State owning working coordinate j, or -1 for chain parameters.
  int owner(std::size_t j) const;
  bool beta_fixed_zero() const { return beta_fixed_; }
  DeltaMode delta_mode() const { return delta_mode_; }
  const MovementKernelSpec& kernel() const { return kernel_; }
  const SamplingScheme& scheme() const { return scheme_; }
  std::size_t q() const { return q_; }
  std::vector<std::string> names() const;

  Eigen::VectorXd to_working(const MsParams& params) const;
  MsParams to_params(const Eigen::VectorXd& w) const;
  /// Coefficient vector (theta then beta) of state i straight from w.
  Eigen::VectorXd state_coef(const Eigen::VectorXd& w, int i) const;
  /// Natural movement parameters of state i straight from w.
  std::vector<double> state_natural(const Eigen::VectorXd& w, int i) const;
  Eigen::MatrixXd gamma(const Eigen::VectorXd& w) const;
  Eigen::VectorXd initial(const Eigen::VectorXd& w) const;

 private:
  MovementKernelSpec kernel_;
  SamplingScheme scheme_;
  int n_states_;
  std::size_t q_;
  DeltaMode delta_mode_;
  bool beta_fixed_;
  std::size_t n_nat_;
  std::vector<bool> log_scale_;
  std::size_t per_state_;
  std::size_t size_;
};

/// Log-likelihood on the working scale with per-state caching of emission
/// columns: perturbing one state's coordinates recomputes only that column.
class MsObjective {
 public:
  MsObjective(const CaseControlData& data, const Parameterization& param);

  double loglik(const Eigen::VectorXd& w) const;
  /// Central-difference gradient of the log-likelihood; also returns LL(w).
  Eigen::VectorXd gradient(const Eigen::VectorXd& w, double* ll = nullptr) const;
  /// Four-point central second differences of the log-likelihood.
  Eigen::MatrixXd hessian(const Eigen::VectorXd& w, double rel_step = 1e-4) const;

  const Parameterization& parameterization() const { return param_; }
  const CaseControlData& data() const { return data_; }

 private:
  Eigen::MatrixXd emissions(const Eigen::VectorXd& w) const;
  double loglik_cached(const Eigen::VectorXd& w, const Eigen::VectorXd& base,
                       const Eigen::MatrixXd& base_emission) const;

  const CaseControlData& data_;
  const Parameterization& param_;
  BurstRanges bursts_;
};

struct FitOptions {
  BfgsOptions bfgs;
  bool compute_se = true;
  double hessian_step = 1e-4;
};

/// Degeneracy checks evaluated on every fit.
struct Diagnostics {
  double best_ll_fraction = 1.0;       // share of starts within 1e-4 of the best LL
  bool single_start_max = false;       // only one of several starts reached the best LL
  bool near_empty_state = false;       // some state has Viterbi occupancy below 1%
  bool boundary_parameter = false;     // natural movement parameter within 1e-4 of its bound
  bool low_step_variance = false;      // implied step-length variance below 0.1
  bool all_low_persistence = false;    // every gamma_ii below 0.2 (N >= 2)
  bool hessian_not_pd = false;         // observed information not positive definite
  bool differing_best_estimates = false;  // starts tied at the best LL disagree on estimates
  std::vector<double> occupancy;       // Viterbi state shares

  bool any() const {
    return single_start_max || near_empty_state || boundary_parameter || low_step_variance ||
           all_low_persistence;
  }
};

/// Wald inference for one state.
struct StateInference {
  std::vector<double> natural;      // natural movement parameters
  std::vector<double> se_theta, se_beta, se_natural;
  std::vector<double> p_theta, p_beta;
};

enum class ModelKind { MSiSSA, iSSA, CaseControlHMM, MovementHMM, TSiSSA };
std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct FitResult {
  ModelKind kind = ModelKind::MSiSSA;
  MovementKernelSpec kernel;
  SamplingScheme scheme;
  std::vector<std::string> habitat_names;
  bool beta_fixed_zero = false;

  MsParams params;
  double loglik = 0.0;
  double grad_norm = 0.0;
  bool converged = false;
  int iterations = 0;
  std::size_t start_index = 0;
  std::vector<double> ll_per_start;
  std::vector<bool> converged_per_start;

  std::size_t n_free = 0;
  std::size_t n_obs = 0;
  double aic = 0.0;
  double bic = 0.0;
  std::uint64_t data_fingerprint = 0;

  bool se_available = false;
  std::vector<StateInference> inference;
  Diagnostics diagnostics;
  std::vector<int> states;  // Viterbi path, one label per choice set
  Eigen::VectorXd working;

  std::vector<NaturalKernel> natural_kernels() const;
};

/// Single-start quasi-Newton maximization from `start`. States in the
/// result are reordered by ascending mean step length (ties: beta_1).
FitResult maximize(const CaseControlData& data, const MsParams& start, bool beta_fixed_zero,
                   const FitOptions& options = {});

/// Observed-information standard errors and two-sided Wald p-values; sets
/// se_available = false and diagnostics.hessian_not_pd when the information
/// matrix is not positive definite.
void wald_inference(FitResult& fit, const CaseControlData& data, double hessian_step = 1e-4);

/// Reorders states by ascending mean step length (ties: first beta).
MsParams order_states(const MsParams& params, const MovementKernelSpec& kernel,
                      const SamplingScheme& scheme);
/// Relabels states: new state k is old state perm[k].
MsParams permute_states(const MsParams& params, const std::vector<int>& perm);

/// Fills the Viterbi path and the degeneracy diagnostics of a fit.
void compute_diagnostics(FitResult& fit, const CaseControlData& data);

std::uint64_t fingerprint(const CaseControlData& data);

}  // namespace msissa
