#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "msissa/kernel.hpp"
#include "msissa/landscape.hpp"
#include "msissa/rng.hpp"

namespace msissa {

/// Homogeneous N-state Markov chain.
struct MarkovChainSpec {
  Eigen::MatrixXd gamma;  // row-stochastic transition matrix
  Eigen::VectorXd delta;  // initial distribution; ignored when `stationary`
  bool stationary = false;

  int n_states() const { return static_cast<int>(gamma.rows()); }
  /// Initial distribution actually used (delta, or the stationary one).
  Eigen::VectorXd initial() const;
  void validate() const;

  /// gamma_ii = stay on the diagonal, remaining mass spread evenly.
  static MarkovChainSpec persistent(int n_states, double stay);
};

/// Movement kernel (natural scale) and selection coefficients of one state.
struct StateModel {
  NaturalKernel kernel;
  std::vector<double> beta;  // one entry per habitat covariate
};

/// Ordered relocations. Within a burst time indices are consecutive.
struct Track {
  std::vector<Point> xy;
  std::vector<int> burst;
  std::vector<int> t;

  std::size_t size() const { return xy.size(); }
  void push_back(Point p, int burst_id, int time) {
    xy.push_back(p);
    burst.push_back(burst_id);
    t.push_back(time);
  }
  void validate() const;
};

/// S_1 ~ initial distribution, S_t | S_{t-1} = i ~ row i of gamma. 0-based labels.
std::vector<int> simulate_states(const MarkovChainSpec& chain, std::size_t length, Rng& rng);

/// Running counters for the rejection sampler.
struct SamplerStats {
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
};

/// Exact draw of the next location from the state-dependent step-selection
/// density given the previous and current location. Kernel proposals are
/// accepted with probability exp(beta'Z(x') - log w_max) where
/// w_max = exp(max(0, max over cells of beta'Z)); proposals outside the
/// habitat are rejected and redrawn. Throws NumericError once more than 10^6
/// proposals have been made at an acceptance rate below 1e-4.
Point sample_step_endpoint(Point prev, Point cur, const StateModel& state, const Habitat& habitat,
                           Rng& rng, SamplerStats* stats = nullptr);

/// Same, with the bound log(w_max) precomputed by the caller.
Point sample_step_endpoint(Point prev, Point cur, const StateModel& state, const Habitat& habitat,
                           double log_w_max, Rng& rng, SamplerStats* stats = nullptr);

struct SimulatedTrack {
  Track track;
  /// states[j] generated the step from location j to j + 1 (length T - 1).
  /// The first step is a kernel-only step with uniform heading.
  std::vector<int> states;
};

/// Simulates T locations as a single burst (id 1) from `start`.
SimulatedTrack simulate_track(const MarkovChainSpec& chain, const std::vector<StateModel>& states,
                              const Habitat& habitat, std::size_t T, Point start, Rng& rng);

}  // namespace msissa
