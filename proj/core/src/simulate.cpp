#include "msissa/simulate.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "msissa/error.hpp"
#include "msissa/msclr.hpp"

namespace msissa {

Eigen::VectorXd MarkovChainSpec::initial() const {
  return stationary ? stationary_distribution(gamma) : delta;
}

void MarkovChainSpec::validate() const {
  const auto n = gamma.rows();
  if (n < 1 || gamma.cols() != n) throw ValidationError("transition matrix must be square");
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double g = gamma(i, j);
      if (!(g >= 0.0 && g <= 1.0)) throw ValidationError("transition probabilities must lie in [0, 1]");
      s += g;
    }
    if (std::abs(s - 1.0) > 1e-12) throw ValidationError("transition matrix rows must sum to 1");
  }
  if (!stationary) {
    if (delta.size() != n) throw ValidationError("initial distribution has wrong length");
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(delta[i] >= 0.0 && delta[i] <= 1.0))
        throw ValidationError("initial probabilities must lie in [0, 1]");
      s += delta[i];
    }
    if (std::abs(s - 1.0) > 1e-12) throw ValidationError("initial distribution must sum to 1");
  }
}

MarkovChainSpec MarkovChainSpec::persistent(int n_states, double stay) {
  MarkovChainSpec c;
  c.gamma = Eigen::MatrixXd::Constant(n_states, n_states,
                                      n_states > 1 ? (1.0 - stay) / (n_states - 1) : 0.0);
  c.gamma.diagonal().setConstant(n_states > 1 ? stay : 1.0);
  c.delta = Eigen::VectorXd::Constant(n_states, 1.0 / n_states);
  return c;
}

void Track::validate() const {
  if (burst.size() != xy.size() || t.size() != xy.size())
    throw ValidationError("track columns differ in length");
  std::size_t start = 0;
  while (start < xy.size()) {
    std::size_t end = start + 1;
    while (end < xy.size() && burst[end] == burst[start]) {
      if (t[end] != t[end - 1] + 1)
        throw ValidationError("time indices within burst " + std::to_string(burst[start]) +
                              " are not consecutive");
      ++end;
    }
    if (end - start < 3)
      throw ValidationError("burst " + std::to_string(burst[start]) +
                            " has fewer than 3 locations");
    start = end;
  }
}

namespace {

int draw_categorical(const double* probs, int n, Rng& rng) {
  const double u = rng.uniform();
  double c = 0.0;
  for (int i = 0; i < n; ++i) {
    c += probs[i];
    if (u < c) return i;
  }
  for (int i = n - 1; i >= 0; --i)
    if (probs[i] > 0.0) return i;
  return n - 1;
}

}  // namespace

std::vector<int> simulate_states(const MarkovChainSpec& chain, std::size_t length, Rng& rng) {
  chain.validate();
  const int n = chain.n_states();
  const Eigen::VectorXd init = chain.initial();
  const Eigen::MatrixXd rows = chain.gamma.transpose();  // column i = row i of gamma
  std::vector<int> s(length);
  if (length == 0) return s;
  s[0] = draw_categorical(init.data(), n, rng);
  for (std::size_t t = 1; t < length; ++t) s[t] = draw_categorical(rows.col(s[t - 1]).data(), n, rng);
  return s;
}

Point sample_step_endpoint(Point prev, Point cur, const StateModel& state, const Habitat& habitat,
                           Rng& rng, SamplerStats* stats) {
  const double log_w_max = std::max(0.0, habitat.max_linear(state.beta));
  return sample_step_endpoint(prev, cur, state, habitat, log_w_max, rng, stats);
}

Point sample_step_endpoint(Point prev, Point cur, const StateModel& state, const Habitat& habitat,
                           double log_w_max, Rng& rng, SamplerStats* stats) {
  if (prev.x == cur.x && prev.y == cur.y)
    throw ValidationError("previous and current location coincide; heading undefined");
  if (state.beta.size() != habitat.size())
    throw ValidationError("selection vector length does not match the habitat layers");
  const double heading = std::atan2(cur.y - prev.y, cur.x - prev.x);
  const std::size_t q = habitat.size();
  const bool selection = std::any_of(state.beta.begin(), state.beta.end(),
                                     [](double b) { return b != 0.0; });

  SamplerStats local;
  SamplerStats& st = stats ? *stats : local;
  constexpr std::uint64_t kMaxProposals = 1'000'000;
  std::uint64_t tries = 0;
  for (;;) {
    ++st.proposals;
    ++tries;
    if (st.proposals >= kMaxProposals &&
        static_cast<double>(st.accepted) < 1e-4 * static_cast<double>(st.proposals))
      throw NumericError("step-selection rejection sampler acceptance rate below 1e-4; "
                         "selection coefficients too extreme for the landscape");
    if (tries > kMaxProposals)
      throw NumericError("step-selection rejection sampler made no progress in 10^6 proposals");

    const double l = step_sample(state.kernel.step, rng);
    const double a = turn_sample(state.kernel.turn, rng);
    const Point next{cur.x + l * std::cos(heading + a), cur.y + l * std::sin(heading + a)};
    if (!habitat.contains(next)) continue;
    if (!selection) {
      ++st.accepted;
      return next;
    }
    double eta = 0.0;
    for (std::size_t j = 0; j < q; ++j) eta += state.beta[j] * interpolate(habitat.layers[j], next);
    if (std::log(rng.uniform_pos()) <= eta - log_w_max) {
      ++st.accepted;
      return next;
    }
  }
}

SimulatedTrack simulate_track(const MarkovChainSpec& chain, const std::vector<StateModel>& states,
                              const Habitat& habitat, std::size_t T, Point start, Rng& rng) {
  chain.validate();
  habitat.validate();
  if (static_cast<int>(states.size()) != chain.n_states())
    throw ValidationError("number of state models does not match the chain");
  if (T < 3) throw ValidationError("a track needs at least 3 locations");
  if (!habitat.contains(start)) throw ValidationError("start location is outside the habitat");
  for (const auto& s : states) {
    validate(s.kernel.step);
    validate(s.kernel.turn);
    if (s.beta.size() != habitat.size())
      throw ValidationError("selection vector length does not match the habitat layers");
  }

  std::vector<double> log_w_max(states.size());
  for (std::size_t i = 0; i < states.size(); ++i)
    log_w_max[i] = std::max(0.0, habitat.max_linear(states[i].beta));

  SimulatedTrack out;
  out.states = simulate_states(chain, T - 1, rng);
  out.track.push_back(start, 1, 0);

  // First step: kernel only, uniform heading.
  const StateModel& first = states[out.states[0]];
  Point second;
  for (int tries = 0;; ++tries) {
    if (tries > 1'000'000) throw NumericError("cannot place the initial step inside the habitat");
    const double l = step_sample(first.kernel.step, rng);
    const double h = turn_sample(UniformTurn{}, rng);
    second = {start.x + l * std::cos(h), start.y + l * std::sin(h)};
    if (habitat.contains(second) && l > 0.0) break;
  }
  out.track.push_back(second, 1, 1);

  SamplerStats stats;
  for (std::size_t j = 1; j + 1 < T; ++j) {
    const int s = out.states[j];
    const Point next = sample_step_endpoint(out.track.xy[j - 1], out.track.xy[j], states[s], habitat,
                                            log_w_max[s], rng, &stats);
    out.track.push_back(next, 1, static_cast<int>(j + 1));
  }
  return out;
}

}  // namespace msissa
