#include "msissa/models.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "msissa/error.hpp"

namespace msissa {
namespace {

constexpr double kBetaChoices[] = {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0};
constexpr double kSameLl = 1e-4;
constexpr std::size_t kMinStateSteps = 30;

// Sample quantile with linear interpolation between order statistics.
double quantile_sorted(const std::vector<double>& x, double p) {
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  const unsigned t = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < t; ++k)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace

StepDistribution step_from_moments(StepFamily family, double mean, double sd) {
  if (!(mean > 0.0) || !(sd > 0.0)) throw ValidationError("step mean and sd must be positive");
  const double var = sd * sd;
  switch (family) {
    case StepFamily::Gamma: return GammaStep{mean * mean / var, mean / var};
    case StepFamily::Exponential: return ExponentialStep{1.0 / mean};
    case StepFamily::LogNormal: {
      const double s2 = std::log1p(var / (mean * mean));
      return LogNormalStep{std::log(mean) - 0.5 * s2, s2};
    }
  }
  return GammaStep{mean * mean / var, mean / var};
}

std::vector<NaturalStart> draw_natural_starts(std::span<const double> lengths,
                                              const MovementKernelSpec& kernel, int n_states,
                                              std::size_t q, std::size_t n_sets, Rng& rng) {
  if (n_sets < 1) throw ValidationError("at least one starting set is required");
  if (n_states < 1) throw ValidationError("at least one state is required");
  std::vector<double> x;
  for (double l : lengths)
    if (std::isfinite(l) && l > 0.0) x.push_back(l);
  if (x.size() < static_cast<std::size_t>(2 * (n_states + 1)))
    throw ValidationError("too few observed steps to place " + std::to_string(n_states + 1) +
                          " step-length quantiles");
  std::sort(x.begin(), x.end());
  std::vector<double> qs;
  for (int k = 0; k <= n_states; ++k)
    qs.push_back(quantile_sorted(x, 0.1 + 0.8 * static_cast<double>(k) / n_states));

  std::vector<NaturalStart> out;
  for (std::size_t s = 0; s < n_sets; ++s) {
    NaturalStart st;
    st.gamma = Eigen::MatrixXd::Zero(n_states, n_states);
    for (int i = 0; i < n_states; ++i) {
      if (n_states == 1) {
        st.gamma(0, 0) = 1.0;
        break;
      }
      const double stay = rng.uniform(0.8, 0.95);
      for (int j = 0; j < n_states; ++j) st.gamma(i, j) = i == j ? stay : (1.0 - stay) / (n_states - 1);
    }
    for (int i = 0; i < n_states; ++i) {
      double lo = qs[static_cast<std::size_t>(i)], hi = qs[static_cast<std::size_t>(i + 1)];
      const double mean = hi > lo ? rng.uniform(lo, hi) : lo;
      const double sd = rng.uniform(mean / 4.0, 2.0 * mean);
      NaturalKernel k{step_from_moments(kernel.step, mean, sd), UniformTurn{}};
      if (kernel.turn == TurnFamily::VonMises) k.turn = VonMisesTurn{rng.uniform(0.2, 2.0)};
      st.kernels.push_back(k);
    }
    for (int i = 0; i < n_states; ++i) {
      std::vector<double> b(q);
      for (auto& v : b) v = kBetaChoices[rng.index(std::size(kBetaChoices))];
      st.beta.push_back(std::move(b));
    }
    out.push_back(std::move(st));
  }
  return out;
}

MsParams params_from_natural(const CaseControlData& data, const Eigen::MatrixXd& gamma,
                             const std::vector<NaturalKernel>& kernels,
                             const std::vector<std::vector<double>>& beta, DeltaMode delta_mode) {
  MsParams p;
  p.gamma = gamma;
  p.delta_mode = delta_mode;
  const auto n = static_cast<Eigen::Index>(kernels.size());
  p.delta = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < kernels.size(); ++i)
    p.states.push_back({natural_to_coef(data.kernel, data.scheme, kernels[i]), beta.at(i)});
  p.validate(data.p(), data.q());
  return p;
}

StartSet generate_starting_values(const CaseControlData& data, int n_states, std::size_t n_sets,
                                  Rng& rng, DeltaMode delta_mode) {
  std::vector<double> used;
  for (std::size_t s = 0; s < data.n_sets(); ++s) used.push_back(data.l[data.set_begin[s]]);
  StartSet set;
  for (const auto& ns : draw_natural_starts(used, data.kernel, n_states, data.q(), n_sets, rng))
    set.starts.push_back(params_from_natural(data, ns.gamma, ns.kernels, ns.beta, delta_mode));
  return set;
}

MsParams single_state_start(const CaseControlData& data) {
  std::vector<double> l, a;
  for (std::size_t s = 0; s < data.n_sets(); ++s) {
    l.push_back(data.l[data.set_begin[s]]);
    a.push_back(data.alpha[data.set_begin[s]]);
  }
  NaturalKernel k{fit_step_mle(data.kernel.step, l), UniformTurn{}};
  if (data.kernel.turn == TurnFamily::VonMises) {
    const auto t = fit_turn_mle(TurnFamily::VonMises, a);
    k.turn = VonMisesTurn{std::max(0.1, std::get<VonMisesTurn>(t).kappa)};
  }
  return params_from_natural(data, Eigen::MatrixXd::Ones(1, 1), {k}, {std::vector<double>(data.q(), 0.0)});
}

FitResult fit_multistart(const CaseControlData& data, int n_states, bool beta_fixed_zero,
                         const MultiStartOptions& options, std::uint64_t seed) {
  data.validate();
  std::vector<MsParams> starts = options.starts;
  if (starts.empty()) {
    Rng rng(seed, "starting-values", static_cast<std::uint64_t>(n_states));
    starts = generate_starting_values(data, n_states, options.n_starts, rng, options.delta_mode).starts;
  }
  if (starts.empty()) throw ValidationError("no starting values");

  FitOptions quick = options.fit;
  quick.compute_se = false;
  std::vector<std::optional<FitResult>> fits(starts.size());
  parallel_for(starts.size(), options.threads, [&](std::size_t i) {
    try {
      fits[i] = maximize(data, starts[i], beta_fixed_zero, quick);
    } catch (const Error& e) {
      log_warning("start " + std::to_string(i + 1) + " failed: " + e.what());
    }
  });

  std::vector<double> ll(starts.size(), -std::numeric_limits<double>::infinity());
  std::vector<bool> conv(starts.size(), false);
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    if (!fits[i]) continue;
    ll[i] = fits[i]->loglik;
    conv[i] = fits[i]->converged;
    if (!conv[i] || !std::isfinite(ll[i])) continue;
    if (!best || ll[i] > ll[*best]) best = i;
  }
  if (!best) throw NumericError("no starting value led to a converged fit (" +
                                std::to_string(starts.size()) + " starts)");

  FitResult fit = std::move(*fits[*best]);
  fit.start_index = *best;
  fit.ll_per_start = ll;
  fit.converged_per_start = conv;

  std::size_t at_best = 0;
  bool differ = false;
  const auto ref = fit.params;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    if (!fits[i] || !(ll[i] >= fit.loglik - kSameLl)) continue;
    ++at_best;
    if (i == *best) continue;  // moved into `fit`
    for (int s = 0; s < n_states; ++s)
      if ((fits[i]->params.coef(s) - ref.coef(s)).lpNorm<Eigen::Infinity>() > 1e-2) differ = true;
  }
  fit.diagnostics.best_ll_fraction = static_cast<double>(at_best) / static_cast<double>(starts.size());
  fit.diagnostics.single_start_max = starts.size() > 1 && at_best == 1;
  fit.diagnostics.differing_best_estimates = differ;
  if (options.fit.compute_se) wald_inference(fit, data, options.fit.hessian_step);
  return fit;
}

FitResult fit_model(ModelKind kind, int n_states, const CaseControlData& data,
                    const MultiStartOptions& options, std::uint64_t seed) {
  switch (kind) {
    case ModelKind::iSSA: {
      MultiStartOptions o = options;
      if (o.starts.empty()) o.starts = {single_state_start(data)};
      return fit_multistart(data, 1, false, o, seed);
    }
    case ModelKind::MSiSSA:
      if (n_states == 1) return fit_model(ModelKind::iSSA, 1, data, options, seed);
      return fit_multistart(data, n_states, false, options, seed);
    case ModelKind::CaseControlHMM: return fit_multistart(data, n_states, true, options, seed);
    case ModelKind::MovementHMM:
    case ModelKind::TSiSSA:
      throw ValidationError("model '" + to_string(kind) + "' needs the raw track, not case-control data");
  }
  throw ValidationError("unknown model kind");
}

// ---------------------------------------------------------------------------

Eigen::VectorXd MovementHmmParams::initial() const {
  const int n = n_states();
  switch (delta_mode) {
    case DeltaMode::Uniform: return Eigen::VectorXd::Constant(n, 1.0 / n);
    case DeltaMode::Stationary: return n == 1 ? Eigen::VectorXd::Ones(1) : stationary_distribution(gamma);
    case DeltaMode::Estimated: return delta;
  }
  return Eigen::VectorXd::Constant(n, 1.0 / n);
}

MovementObservations movement_observations(std::span<const ObservedStep> steps) {
  MovementObservations obs;
  std::size_t b = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    obs.l.push_back(steps[i].l);
    obs.alpha.push_back(steps[i].alpha);
    if (i > 0 && steps[i].burst != steps[i - 1].burst) {
      obs.bursts.emplace_back(b, i);
      b = i;
    }
  }
  if (!steps.empty()) obs.bursts.emplace_back(b, steps.size());
  return obs;
}

MovementObservations movement_observations(const CaseControlData& data) {
  MovementObservations obs;
  for (std::size_t s = 0; s < data.n_sets(); ++s) {
    obs.l.push_back(data.l[data.set_begin[s]]);
    obs.alpha.push_back(data.alpha[data.set_begin[s]]);
  }
  obs.bursts = data.burst_ranges();
  return obs;
}

Eigen::MatrixXd movement_log_emissions(const MovementHmmParams& params, const MovementObservations& obs) {
  const int n = params.n_states();
  Eigen::MatrixXd e(static_cast<Eigen::Index>(obs.size()), n);
  for (int i = 0; i < n; ++i) {
    const auto& k = params.states[static_cast<std::size_t>(i)];
    for (std::size_t t = 0; t < obs.size(); ++t)
      e(static_cast<Eigen::Index>(t), i) = step_logpdf(k.step, obs.l[t]) + turn_logpdf(k.turn, obs.alpha[t]);
  }
  return e;
}

double movement_hmm_loglik(const MovementHmmParams& params, const MovementObservations& obs) {
  return hmm_forward_loglik(movement_log_emissions(params, obs), params.gamma, params.initial(), obs.bursts);
}

namespace {

// Working vector: per state the natural kernel values (log scale except the
// log-normal mu), then Gamma row logits against the diagonal, then delta logits.
class MovementParameterization {
 public:
  MovementParameterization(MovementKernelSpec kernel, int n, DeltaMode mode)
      : kernel_(kernel), n_(n), mode_(mode) {
    for (const auto& name : kernel_.natural_names()) log_scale_.push_back(name != "mu");
    per_ = log_scale_.size();
  }
  std::size_t size() const {
    const auto n = static_cast<std::size_t>(n_);
    return n * per_ + n * (n - 1) + (mode_ == DeltaMode::Estimated ? n - 1 : 0);
  }

  Eigen::VectorXd to_working(const MovementHmmParams& p) const {
    Eigen::VectorXd w(static_cast<Eigen::Index>(size()));
    std::size_t pos = 0;
    for (const auto& k : p.states) {
      const auto v = natural_values(k);
      for (std::size_t j = 0; j < per_; ++j) w[static_cast<Eigen::Index>(pos++)] = log_scale_[j] ? std::log(v[j]) : v[j];
    }
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        if (i != j) w[static_cast<Eigen::Index>(pos++)] = std::log(p.gamma(i, j) / p.gamma(i, i));
    if (mode_ == DeltaMode::Estimated)
      for (int j = 1; j < n_; ++j) w[static_cast<Eigen::Index>(pos++)] = std::log(p.delta[j] / p.delta[0]);
    return w;
  }

  MovementHmmParams to_params(const Eigen::VectorXd& w) const {
    MovementHmmParams p;
    p.delta_mode = mode_;
    std::size_t pos = 0;
    for (int i = 0; i < n_; ++i) {
      std::vector<double> v(per_);
      for (std::size_t j = 0; j < per_; ++j) {
        const double x = w[static_cast<Eigen::Index>(pos++)];
        v[j] = log_scale_[j] ? std::exp(x) : x;
      }
      p.states.push_back(kernel_from_values(kernel_, v));
    }
    p.gamma.resize(n_, n_);
    for (int i = 0; i < n_; ++i) {
      Eigen::VectorXd eta = Eigen::VectorXd::Zero(n_);
      for (int j = 0; j < n_; ++j)
        if (j != i) eta[j] = w[static_cast<Eigen::Index>(pos++)];
      const double m = eta.maxCoeff();
      Eigen::VectorXd e = (eta.array() - m).exp().matrix();
      p.gamma.row(i) = (e / e.sum()).transpose();
    }
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(n_);
    if (mode_ == DeltaMode::Estimated)
      for (int j = 1; j < n_; ++j) eta[j] = w[static_cast<Eigen::Index>(pos++)];
    const double m = eta.maxCoeff();
    p.delta = (eta.array() - m).exp().matrix();
    p.delta /= p.delta.sum();
    return p;
  }

 private:
  MovementKernelSpec kernel_;
  int n_;
  DeltaMode mode_;
  std::vector<bool> log_scale_;
  std::size_t per_ = 0;
};

MovementHmmParams order_movement_states(const MovementHmmParams& p) {
  const int n = p.n_states();
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
    return step_mean(p.states[static_cast<std::size_t>(a)].step) <
           step_mean(p.states[static_cast<std::size_t>(b)].step);
  });
  MovementHmmParams out = p;
  for (int a = 0; a < n; ++a) {
    out.states[static_cast<std::size_t>(a)] = p.states[static_cast<std::size_t>(perm[a])];
    for (int b = 0; b < n; ++b) out.gamma(a, b) = p.gamma(perm[a], perm[b]);
    out.delta[a] = p.delta[perm[a]];
  }
  return out;
}

}  // namespace

MovementHmmFit fit_movement_hmm(const MovementObservations& obs, const MovementKernelSpec& kernel,
                                int n_states, const MultiStartOptions& options, std::uint64_t seed) {
  if (obs.size() == 0) throw ValidationError("no steps to fit a movement HMM to");
  for (std::size_t t = 0; t < obs.size(); ++t)
    if (!(obs.l[t] > 0.0) || !std::isfinite(obs.l[t]) || !is_valid_angle(obs.alpha[t]))
      throw ValidationError("invalid step at index " + std::to_string(t));
  MovementParameterization param(kernel, n_states, options.delta_mode);

  Rng rng(seed, "movement-hmm-starts", static_cast<std::uint64_t>(n_states));
  const auto natural = draw_natural_starts(obs.l, kernel, n_states, 0, std::max<std::size_t>(1, options.n_starts), rng);

  auto negll = [&](const Eigen::VectorXd& w) {
    try {
      const double ll = movement_hmm_loglik(param.to_params(w), obs);
      return std::isfinite(ll) ? -ll : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  auto with_grad = [&](const Eigen::VectorXd& w, Eigen::VectorXd& g) {
    const double f = negll(w);
    if (!std::isfinite(f)) {
      g.setZero(w.size());
      return f;
    }
    g = central_gradient(negll, w);
    return g.allFinite() ? f : std::numeric_limits<double>::infinity();
  };

  std::vector<std::optional<BfgsResult>> runs(natural.size());
  parallel_for(natural.size(), options.threads, [&](std::size_t i) {
    MovementHmmParams p;
    p.gamma = natural[i].gamma;
    p.delta_mode = options.delta_mode;
    p.delta = Eigen::VectorXd::Constant(n_states, 1.0 / n_states);
    p.states = natural[i].kernels;
    try {
      runs[i] = bfgs_minimize(with_grad, param.to_working(p), options.fit.bfgs);
    } catch (const Error& e) {
      log_warning("movement HMM start " + std::to_string(i + 1) + " failed: " + e.what());
    }
  });

  MovementHmmFit fit;
  fit.kernel = kernel;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const double ll = runs[i] ? -runs[i]->value : -std::numeric_limits<double>::infinity();
    fit.ll_per_start.push_back(ll);
    if (!runs[i] || !runs[i]->converged || !std::isfinite(ll)) continue;
    if (!best || ll > fit.ll_per_start[*best]) best = i;
  }
  if (!best) throw NumericError("no starting value led to a converged movement HMM fit");
  const BfgsResult& r = *runs[*best];
  fit.params = order_movement_states(param.to_params(r.x));
  fit.loglik = -r.value;
  fit.converged = r.converged;
  fit.iterations = r.iterations;
  fit.start_index = *best;
  fit.n_free = param.size();
  fit.n_obs = obs.size();
  fit.aic = -2.0 * fit.loglik + 2.0 * static_cast<double>(fit.n_free);
  fit.bic = -2.0 * fit.loglik + static_cast<double>(fit.n_free) * std::log(static_cast<double>(fit.n_obs));
  fit.states = hmm_viterbi(movement_log_emissions(fit.params, obs), fit.params.gamma, fit.params.initial(),
                           obs.bursts);
  return fit;
}

// ---------------------------------------------------------------------------

TsIssaResult fit_tsissa(const Track& track, const Habitat& habitat, const MovementKernelSpec& kernel,
                        int n_states, std::size_t M, const MultiStartOptions& options,
                        std::uint64_t seed) {
  if (n_states < 2) throw ValidationError("the two-step pipeline needs at least 2 states");
  TsIssaResult out;
  out.steps = observed_steps(track);
  const auto obs = movement_observations(out.steps);
  out.hmm = fit_movement_hmm(obs, kernel, n_states, options, derive_seed(seed, "tsissa-hmm"));
  out.decoded = out.hmm.states;
  out.state_counts.assign(static_cast<std::size_t>(n_states), 0);
  for (int s : out.decoded) ++out.state_counts[static_cast<std::size_t>(s)];

  out.state_fits.resize(static_cast<std::size_t>(n_states));
  for (int i = 0; i < n_states; ++i) {
    const auto si = static_cast<std::size_t>(i);
    if (out.state_counts[si] < kMinStateSteps) {
      log_warning("state " + std::to_string(i + 1) + " received " + std::to_string(out.state_counts[si]) +
                  " steps; its regression is skipped");
      continue;
    }
    std::vector<ObservedStep> subset;
    for (std::size_t t = 0; t < out.steps.size(); ++t)
      if (out.decoded[t] == i) subset.push_back(out.steps[t]);
    const NaturalKernel& k = out.hmm.params.states[si];
    std::optional<VonMisesTurn> turn;
    if (const auto* vm = std::get_if<VonMisesTurn>(&k.turn)) turn = *vm;
    const auto scheme = SamplingScheme::importance(k.step, turn);
    const auto data = build_choice_sets(subset, habitat, kernel, scheme, M,
                                        derive_seed(seed, "tsissa-controls", si));
    MultiStartOptions o = options;
    o.starts.clear();
    FitResult f = fit_model(ModelKind::iSSA, 1, data, o, derive_seed(seed, "tsissa-fit", si));
    f.kind = ModelKind::TSiSSA;
    out.state_fits[si] = std::move(f);
  }
  return out;
}

// ---------------------------------------------------------------------------

ModelRanking select_model(const std::vector<FitResult>& fits) {
  if (fits.empty()) throw ValidationError("no fits to compare");
  for (const auto& f : fits) {
    if (f.kind == ModelKind::MovementHMM || f.kind == ModelKind::TSiSSA)
      throw ValidationError("model '" + to_string(f.kind) +
                            "' has no likelihood comparable to case-control fits");
    if (f.n_obs != fits.front().n_obs || f.data_fingerprint != fits.front().data_fingerprint)
      throw ValidationError("fits were obtained on different case-control data");
  }
  ModelRanking r;
  const std::size_t n = fits.size();
  auto rank = [&](auto crit) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const double ca = crit(fits[a]), cb = crit(fits[b]);
      if (ca != cb) return ca < cb;
      return fits[a].n_free < fits[b].n_free;
    });
    return idx;
  };
  r.by_aic = rank([](const FitResult& f) { return f.aic; });
  r.by_bic = rank([](const FitResult& f) { return f.bic; });
  for (std::size_t i = 0; i < n; ++i) {
    r.delta_aic.push_back(fits[i].aic - fits[r.by_aic.front()].aic);
    r.delta_bic.push_back(fits[i].bic - fits[r.by_bic.front()].bic);
  }
  return r;
}

}  // namespace msissa
