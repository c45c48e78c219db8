#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "msissa/kernel.hpp"
#include "msissa/landscape.hpp"
#include "msissa/rng.hpp"
#include "msissa/simulate.hpp"

namespace msissa {

/// A step with a defined turning angle: prev -> from -> to.
struct ObservedStep {
  int burst = 0;
  int t = 0;               // time index of the end location
  std::size_t origin = 0;  // track index of `from`
  Point prev, from, to;
  double l = 0.0;
  double alpha = 0.0;
};

/// All steps of the track that have a defined turning angle, in time order.
/// Zero-length steps are dropped with a warning; the burst is split there and
/// the remainder receives a fresh burst id.
std::vector<ObservedStep> observed_steps(const Track& track);

/// Case-control data. Alternatives are stored row-wise; choice set s owns rows
/// [set_begin[s], set_begin[s + 1]) and its first row is the used step.
struct CaseControlData {
  MovementKernelSpec kernel;
  SamplingScheme scheme;
  std::vector<std::string> habitat_names;

  std::vector<int> set_burst;
  std::vector<int> set_t;
  std::vector<std::size_t> set_origin;  // track index of the step start, when known
  std::vector<std::size_t> set_begin;   // size n_sets + 1

  std::vector<Point> xy;
  std::vector<double> l;
  std::vector<double> alpha;
  std::vector<double> offset;
  Eigen::MatrixXd design;  // rows x (p + q): movement covariates C then habitat covariates Z

  std::size_t n_sets() const { return set_burst.size(); }
  std::size_t n_rows() const { return l.size(); }
  std::size_t p() const { return kernel.n_coef(); }
  std::size_t q() const { return habitat_names.size(); }
  std::size_t set_size(std::size_t s) const { return set_begin[s + 1] - set_begin[s]; }
  /// Largest number of controls in any choice set.
  std::size_t max_controls() const;
  /// Half-open ranges of choice-set indices, one per burst.
  std::vector<std::pair<std::size_t, std::size_t>> burst_ranges() const;
  bool has_offset() const { return scheme.has_offset(kernel); }
  void validate() const;
};

struct ProposalFit {
  StepDistribution step;
  TurnDistribution turn;
};

/// Fits the proposal distributions to the observed steps; a uniform turn
/// spec yields a uniform turn proposal without fitting.
ProposalFit fit_proposal(const Track& track, const MovementKernelSpec& spec, bool use_moments = false);
ProposalFit fit_proposal(std::span<const ObservedStep> steps, const MovementKernelSpec& spec,
                         bool use_moments = false);

/// Builds one choice set per observed step with M controls drawn under the
/// scheme (Grid enumerates cell centres instead and ignores M). Control draws
/// falling outside the habitat are redrawn up to 1000 times; grid candidates
/// outside it are dropped. Each step draws from its own stream derived from
/// one seed taken from `rng` and the step's track index.
CaseControlData generate_choice_sets(const Track& track, const Habitat& habitat,
                                     const MovementKernelSpec& spec, const SamplingScheme& scheme,
                                     std::size_t M, Rng& rng);

/// Same, for a caller-selected subset of steps and an explicit base seed.
CaseControlData build_choice_sets(std::span<const ObservedStep> steps, const Habitat& habitat,
                                  const MovementKernelSpec& spec, const SamplingScheme& scheme,
                                  std::size_t M, std::uint64_t seed);

/// Case-control CSV with columns
/// burst,t,alt,case,x,y,l,alpha,C_1..C_p,Z_1..Z_q,offset
/// plus a sidecar `<path>.meta.json` holding the kernel, scheme and covariate names.
void write_case_control(const CaseControlData& data, const std::filesystem::path& path);
/// Reads the CSV and, when present, its sidecar. Without a sidecar the kernel
/// is inferred from the number of C columns and uniform-step sampling is assumed.
CaseControlData read_case_control(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& csv);

/// Track CSV `burst,t,x,y`.
void write_track(const Track& track, const std::filesystem::path& path);
Track read_track(const std::filesystem::path& path);

/// Emits a warning line on stderr unless warnings are silenced.
void log_warning(const std::string& message);
void set_warnings_enabled(bool enabled);

}  // namespace msissa
