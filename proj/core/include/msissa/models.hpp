#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msissa/hmm.hpp"
#include "msissa/kernel.hpp"
#include "msissa/landscape.hpp"
#include "msissa/msclr.hpp"
#include "msissa/sampling.hpp"
#include "msissa/simulate.hpp"

namespace msissa {

struct StartSet {
  std::vector<MsParams> starts;
  std::uint64_t seed = 0;
  std::size_t count() const { return starts.size(); }
};

/// Natural-scale starting values drawn by the quantile procedure: gamma_ii ~
/// U(0.8, 0.95) with equal off-diagonal shares; state means between
/// consecutive step-length quantiles spanning 10%..90%; sd ~ U(mean/4,
/// 2 mean); kappa ~ U(0.2, 2); beta from {-2, -1, -0.5, 0, 0.5, 1, 2}.
struct NaturalStart {
  Eigen::MatrixXd gamma;
  std::vector<NaturalKernel> kernels;
  std::vector<std::vector<double>> beta;
};

std::vector<NaturalStart> draw_natural_starts(std::span<const double> lengths,
                                              const MovementKernelSpec& kernel, int n_states,
                                              std::size_t q, std::size_t n_sets, Rng& rng);

/// Step distribution of the family with the given mean and standard deviation.
StepDistribution step_from_moments(StepFamily family, double mean, double sd);

StartSet generate_starting_values(const CaseControlData& data, int n_states, std::size_t n_sets,
                                  Rng& rng, DeltaMode delta_mode = DeltaMode::Uniform);

/// Converts natural-scale values to regression-scale parameters for the data's scheme.
MsParams params_from_natural(const CaseControlData& data, const Eigen::MatrixXd& gamma,
                             const std::vector<NaturalKernel>& kernels,
                             const std::vector<std::vector<double>>& beta,
                             DeltaMode delta_mode = DeltaMode::Uniform);

struct MultiStartOptions {
  std::size_t n_starts = 50;
  DeltaMode delta_mode = DeltaMode::Uniform;
  FitOptions fit;
  unsigned threads = 1;
  /// When set, used instead of random starts.
  std::vector<MsParams> starts;
};

/// Fits every start and keeps the best log-likelihood (ties: lowest start
/// index). Throws NumericError when no start converges.
FitResult fit_multistart(const CaseControlData& data, int n_states, bool beta_fixed_zero,
                         const MultiStartOptions& options, std::uint64_t seed);

/// iSSA, MSiSSA(N) and CaseControlHMM(N) on case-control data.
FitResult fit_model(ModelKind kind, int n_states, const CaseControlData& data,
                    const MultiStartOptions& options, std::uint64_t seed);

/// Deterministic single-state start: natural kernel fitted to the used
/// steps, beta = 0.
MsParams single_state_start(const CaseControlData& data);

// ---------------------------------------------------------------------------
// Movement HMM on raw step lengths and turning angles.

struct MovementHmmParams {
  Eigen::MatrixXd gamma;
  DeltaMode delta_mode = DeltaMode::Uniform;
  Eigen::VectorXd delta;
  std::vector<NaturalKernel> states;
  int n_states() const { return static_cast<int>(states.size()); }
  Eigen::VectorXd initial() const;
};

struct MovementObservations {
  std::vector<double> l;
  std::vector<double> alpha;
  BurstRanges bursts;
  std::size_t size() const { return l.size(); }
};

MovementObservations movement_observations(std::span<const ObservedStep> steps);
/// Used steps of case-control data.
MovementObservations movement_observations(const CaseControlData& data);

Eigen::MatrixXd movement_log_emissions(const MovementHmmParams& params, const MovementObservations& obs);
double movement_hmm_loglik(const MovementHmmParams& params, const MovementObservations& obs);

struct MovementHmmFit {
  MovementKernelSpec kernel;
  MovementHmmParams params;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  std::size_t start_index = 0;
  std::vector<double> ll_per_start;
  std::size_t n_free = 0;
  std::size_t n_obs = 0;
  double aic = 0.0;
  double bic = 0.0;
  std::vector<int> states;  // Viterbi path
};

MovementHmmFit fit_movement_hmm(const MovementObservations& obs, const MovementKernelSpec& kernel,
                                int n_states, const MultiStartOptions& options, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Two-step pipeline.

struct TsIssaResult {
  MovementHmmFit hmm;
  std::vector<ObservedStep> steps;
  std::vector<int> decoded;                      // HMM state per step
  std::vector<std::size_t> state_counts;
  std::vector<std::optional<FitResult>> state_fits;  // empty when the state had < 30 steps
};

/// Movement HMM on the observed steps, Viterbi classification, per-state
/// importance sampling from the state's fitted kernel and a per-state
/// conditional logistic regression.
TsIssaResult fit_tsissa(const Track& track, const Habitat& habitat, const MovementKernelSpec& kernel,
                        int n_states, std::size_t M, const MultiStartOptions& options,
                        std::uint64_t seed);

// ---------------------------------------------------------------------------

struct ModelRanking {
  std::vector<std::size_t> by_aic;  // indices into the input, best first
  std::vector<std::size_t> by_bic;
  std::vector<double> delta_aic;    // per input, against the best
  std::vector<double> delta_bic;
};

/// Ranks fits to the same case-control data; throws ValidationError for
/// movement HMMs, two-step fits or fits to different data.
ModelRanking select_model(const std::vector<FitResult>& fits);

}  // namespace msissa
