#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "msissa/landscape.hpp"
#include "msissa/models.hpp"
#include "msissa/msclr.hpp"
#include "msissa/serialize.hpp"
#include "msissa/simulate.hpp"

namespace msissa {

inline constexpr std::uint64_t kDefaultSeed = 20240607;

/// Method names used throughout the study: "issa", "tsissa", "msissa" (two
/// states) and "hmm" (two-state case-control HMM, selection fixed at zero).
struct ScenarioSpec {
  int scenario = 1;
  MarkovChainSpec chain;
  std::vector<StateModel> truth;
  GrfSpec landscape;
  std::size_t T = 1000;
  std::vector<std::size_t> M = {20};
  std::vector<std::string> methods = {"issa", "tsissa", "msissa", "hmm"};
  std::size_t n_runs = 25;
  std::uint64_t seed = kDefaultSeed;
  std::size_t n_starts = 10;
  /// Start the two-state fits at the truth instead of random values.
  bool true_starts = false;
  /// "importance" (gamma step proposal, uniform turns) or "uniform"
  /// (uniform steps up to the largest observed step plus 10).
  std::string scheme = "importance";
  DeltaMode delta_mode = DeltaMode::Uniform;
  unsigned threads = 1;

  /// Presets for scenarios 1-4; `full` selects 100 runs, M in {20, 100, 500}
  /// and 50 starts instead of 25 runs, M = 20 and 10 starts.
  static ScenarioSpec preset(int scenario, bool full = false);
  int n_true_states() const { return static_cast<int>(truth.size()); }
  void validate() const;
};

Json scenario_to_json(const ScenarioSpec& s);
/// Starts from the preset named by "scenario" (and "profile") and overrides
/// any field present.
ScenarioSpec scenario_from_json(const Json& j);

/// Reported parameter names, per reported state r: beta_r, then the
/// natural kernel parameters (shape_r, rate_r, kappa_r for gamma/von Mises).
std::vector<std::string> reported_parameters(const ScenarioSpec& spec);
std::vector<double> reported_truth(const ScenarioSpec& spec);

struct MethodRun {
  std::string method;
  std::size_t M = 0;
  bool ok = false;
  std::string error;
  std::vector<double> estimates;     // aligned with reported_parameters
  std::vector<double> p_beta;        // per reported state; NaN when unavailable
  double misclassification = std::numeric_limits<double>::quiet_NaN();  // percent
  bool has_ic = false;
  double loglik = 0.0, aic = 0.0, bic = 0.0;
  Diagnostics diagnostics;
  bool converged = false;
};

struct RunRecord {
  std::size_t run = 0;
  bool ok = false;
  std::string error;
  std::vector<MethodRun> methods;
};

struct MethodMetrics {
  std::string method;
  std::size_t M = 0;
  std::size_t n_completed = 0;
  std::vector<double> bias, rmse;        // aligned with reported_parameters
  double misclass_mean = std::numeric_limits<double>::quiet_NaN();
  double misclass_sd = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> pct_significant;   // per reported state
  std::vector<std::size_t> n_significance;  // runs with a p-value, per state
  double pct_near_empty = 0.0;
  double pct_any_flag = 0.0;
  double pct_single_start_max = 0.0;
  double pct_boundary = 0.0;
  double pct_low_variance = 0.0;
  double pct_low_persistence = 0.0;
  double pct_hessian_not_pd = 0.0;
};

struct SelectionMetrics {
  std::size_t M = 0;
  std::vector<std::string> candidates;
  std::vector<double> pct_aic, pct_bic;
  std::size_t n_runs = 0;
};

struct StudyMetrics {
  int scenario = 1;
  std::vector<std::string> parameters;
  std::vector<double> truth;
  std::size_t n_runs = 0;
  std::size_t n_completed = 0;
  std::vector<MethodMetrics> methods;
  std::vector<SelectionMetrics> selection;

  const MethodMetrics* find(const std::string& method, std::size_t M) const;
};

struct StudyResult {
  ScenarioSpec spec;
  RasterSummary landscape;
  std::vector<RunRecord> runs;
  StudyMetrics metrics;
};

/// The shared landscape of a scenario (seeded separately from the runs).
Habitat study_landscape(const ScenarioSpec& spec);

/// One simulation run: track, case-control data per M and all requested fits.
RunRecord run_single(const ScenarioSpec& spec, const Habitat& habitat, std::size_t run);

using ProgressCallback = std::function<void(std::size_t done, std::size_t total)>;
StudyResult run_study(const ScenarioSpec& spec, const ProgressCallback& progress = {});

StudyMetrics compute_metrics(const ScenarioSpec& spec, const std::vector<RunRecord>& runs);

/// Per-fit degeneracy flags of two-state fits (their multi-start traces included).
struct DegeneracyFlags {
  bool single_start_max = false;
  bool near_empty_state = false;
  bool boundary_parameter = false;
  bool low_step_variance = false;
  bool all_low_persistence = false;
  bool any() const {
    return single_start_max || near_empty_state || boundary_parameter || low_step_variance ||
           all_low_persistence;
  }
};
std::vector<DegeneracyFlags> degeneracy_report(const std::vector<FitResult>& fits);

/// Smallest misclassification (percent) over relabellings of `decoded`, and
/// the relabelling achieving it: perm[fitted state] = true state.
std::pair<double, std::vector<int>> align_states(const std::vector<int>& truth,
                                                  const std::vector<int>& decoded, int n_fitted,
                                                  int n_true);

/// Writes scenN_table2/3/4/S3/S4.csv, scenN_runs.csv, scenN_degeneracy.csv and
/// scenN_metrics.json under `dir`. Numbers carry 6 significant digits.
void report_tables(const StudyResult& result, const std::filesystem::path& dir);

}  // namespace msissa
