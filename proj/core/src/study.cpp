#include "msissa/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "msissa/error.hpp"
#include "msissa/sampling.hpp"

namespace msissa {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const MovementKernelSpec kStudyKernel{StepFamily::Gamma, TurnFamily::VonMises};

StateModel state(double beta, double shape, double rate, double kappa) {
  return {{GammaStep{shape, rate}, VonMisesTurn{kappa}}, {beta}};
}

std::string label(const ScenarioSpec& s, const std::string& what) {
  return "scen" + std::to_string(s.scenario) + "-" + what;
}

bool has_method(const ScenarioSpec& s, const std::string& m) {
  return std::find(s.methods.begin(), s.methods.end(), m) != s.methods.end();
}

int reported_states(const ScenarioSpec& s) { return std::max(2, s.n_true_states()); }

}  // namespace

ScenarioSpec ScenarioSpec::preset(int scenario, bool full) {
  ScenarioSpec s;
  s.scenario = scenario;
  s.chain = MarkovChainSpec::persistent(2, 0.9);
  switch (scenario) {
    case 1: s.truth = {state(0.0, 1.2, 1.25, 0.3), state(2.0, 2.5, 0.29, 1.0)}; break;
    case 2: s.truth = {state(-2.0, 2.5, 0.29, 1.0), state(2.0, 2.5, 0.29, 1.0)}; break;
    case 3: s.truth = {state(0.0, 1.2, 1.25, 0.3), state(0.0, 2.5, 0.29, 1.0)}; break;
    case 4:
      s.truth = {state(2.0, 2.5, 0.29, 1.0)};
      s.chain = MarkovChainSpec::persistent(1, 1.0);
      s.methods = {"issa", "msissa"};
      break;
    default: throw ValidationError("scenario must be 1, 2, 3 or 4");
  }
  if (full) {
    s.n_runs = 100;
    s.M = {20, 100, 500};
    s.n_starts = 50;
  }
  return s;
}

void ScenarioSpec::validate() const {
  if (scenario < 1 || scenario > 4) throw ValidationError("scenario must be 1, 2, 3 or 4");
  if (truth.empty()) throw ValidationError("the scenario needs at least one true state");
  if (chain.n_states() != n_true_states()) throw ValidationError("chain size does not match the true states");
  if (scenario == 4 && n_true_states() != 1) throw ValidationError("scenario 4 has a single true state");
  chain.validate();
  landscape.validate();
  for (const auto& t : truth) {
    if (t.beta.size() != 1) throw ValidationError("study states carry exactly one selection coefficient");
    if (family_of(t.kernel.step) != StepFamily::Gamma || family_of(t.kernel.turn) != TurnFamily::VonMises)
      throw ValidationError("study states use gamma step lengths and von Mises turning angles");
  }
  if (T < 50) throw ValidationError("T must be at least 50");
  if (M.empty()) throw ValidationError("at least one M is required");
  for (auto m : M)
    if (m < 1) throw ValidationError("M must be positive");
  if (n_runs < 1) throw ValidationError("n_runs must be positive");
  if (n_starts < 1) throw ValidationError("n_starts must be positive");
  for (const auto& m : methods)
    if (m != "issa" && m != "tsissa" && m != "msissa" && m != "hmm")
      throw ValidationError("unknown study method '" + m + "'");
  if (scheme != "importance" && scheme != "uniform")
    throw ValidationError("study scheme must be 'importance' or 'uniform'");
}

Json scenario_to_json(const ScenarioSpec& s) {
  SimulationModel m{s.chain, s.truth};
  return {{"scenario", s.scenario},
          {"truth", simulation_model_to_json(m)},
          {"landscape",
           {{"sigma2", s.landscape.sill},
            {"range", s.landscape.range},
            {"rows", s.landscape.n_rows},
            {"cols", s.landscape.n_cols},
            {"cell_size", s.landscape.cell_size}}},
          {"T", s.T},
          {"M", s.M},
          {"methods", s.methods},
          {"n_runs", s.n_runs},
          {"seed", s.seed},
          {"n_starts", s.n_starts},
          {"true_starts", s.true_starts},
          {"scheme", s.scheme},
          {"delta_mode", to_string(s.delta_mode)}};
}

ScenarioSpec scenario_from_json(const Json& j) {
  try {
    const bool full = j.value("profile", std::string("scaled")) == "full";
    ScenarioSpec s = ScenarioSpec::preset(j.at("scenario").get<int>(), full);
    if (j.contains("truth")) {
      const auto m = simulation_model_from_json(j["truth"]);
      s.chain = m.chain;
      s.truth = m.states;
    }
    if (j.contains("landscape")) {
      const auto& l = j["landscape"];
      s.landscape.sill = l.value("sigma2", s.landscape.sill);
      s.landscape.range = l.value("range", s.landscape.range);
      s.landscape.n_rows = l.value("rows", s.landscape.n_rows);
      s.landscape.n_cols = l.value("cols", s.landscape.n_cols);
      s.landscape.cell_size = l.value("cell_size", s.landscape.cell_size);
    }
    s.T = j.value("T", s.T);
    if (j.contains("M")) s.M = j["M"].get<std::vector<std::size_t>>();
    if (j.contains("methods")) s.methods = j["methods"].get<std::vector<std::string>>();
    s.n_runs = j.value("n_runs", s.n_runs);
    s.seed = j.value("seed", s.seed);
    s.n_starts = j.value("n_starts", s.n_starts);
    s.true_starts = j.value("true_starts", s.true_starts);
    s.scheme = j.value("scheme", s.scheme);
    if (j.contains("delta_mode")) s.delta_mode = delta_mode_from_string(j["delta_mode"].get<std::string>());
    s.threads = j.value("threads", s.threads);
    s.validate();
    return s;
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("malformed study spec: ") + e.what());
  }
}

std::vector<std::string> reported_parameters(const ScenarioSpec& spec) {
  const int R = reported_states(spec);
  std::vector<std::string> out;
  for (const char* name : {"beta", "shape", "rate", "kappa"})
    for (int r = 1; r <= R; ++r) out.push_back(std::string(name) + "_" + std::to_string(r));
  return out;
}

namespace {

// Values of one reported state in the order beta, shape, rate, kappa.
std::vector<double> state_values(double beta, const NaturalKernel& k) {
  std::vector<double> v{beta};
  for (double x : natural_values(k)) v.push_back(x);
  return v;
}

// Interleaves per-state value vectors into parameter-major order.
std::vector<double> interleave(const std::vector<std::vector<double>>& per_state) {
  std::vector<double> out;
  const std::size_t n = per_state.front().size();
  for (std::size_t p = 0; p < n; ++p)
    for (const auto& s : per_state) out.push_back(s[p]);
  return out;
}

}  // namespace

std::vector<double> reported_truth(const ScenarioSpec& spec) {
  const int R = reported_states(spec);
  std::vector<std::vector<double>> per;
  for (int r = 0; r < R; ++r) {
    const auto& t = spec.truth[static_cast<std::size_t>(std::min(r, spec.n_true_states() - 1))];
    per.push_back(state_values(t.beta[0], t.kernel));
  }
  return interleave(per);
}

std::pair<double, std::vector<int>> align_states(const std::vector<int>& truth,
                                                  const std::vector<int>& decoded, int n_fitted,
                                                  int n_true) {
  if (truth.size() != decoded.size()) throw ValidationError("state sequences differ in length");
  const int K = std::max(n_fitted, n_true);
  std::vector<int> perm(static_cast<std::size_t>(K));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> best_perm = perm;
  do {
    std::size_t wrong = 0;
    for (std::size_t t = 0; t < truth.size(); ++t)
      if (perm[static_cast<std::size_t>(decoded[t])] != truth[t]) ++wrong;
    const double pct = truth.empty() ? 0.0 : 100.0 * static_cast<double>(wrong) / static_cast<double>(truth.size());
    if (pct < best) {
      best = pct;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  best_perm.resize(static_cast<std::size_t>(n_fitted));
  return {best, best_perm};
}

Habitat study_landscape(const ScenarioSpec& spec) {
  Rng rng(spec.seed, "landscape", static_cast<std::uint64_t>(spec.scenario),
          static_cast<std::uint64_t>(std::llround(spec.landscape.range * 1000.0)));
  return Habitat("Z", simulate_grf(spec.landscape, rng));
}

namespace {

struct Fitted {
  std::vector<double> beta;              // per fitted state
  std::vector<NaturalKernel> kernels;    // per fitted state
  std::vector<double> p_beta;            // per fitted state
  std::vector<bool> present;             // per fitted state
};

Fitted from_fit(const FitResult& f) {
  Fitted out;
  const auto kernels = f.natural_kernels();
  for (int i = 0; i < f.params.n_states(); ++i) {
    const auto si = static_cast<std::size_t>(i);
    out.beta.push_back(f.params.states[si].beta.empty() ? 0.0 : f.params.states[si].beta[0]);
    out.kernels.push_back(kernels[si]);
    out.p_beta.push_back(f.se_available && !f.inference[si].p_beta.empty() ? f.inference[si].p_beta[0] : kNaN);
    out.present.push_back(true);
  }
  return out;
}

// Reported estimates given fitted states and the fitted -> reported relabelling.
void fill_estimates(MethodRun& mr, const Fitted& f, const std::vector<int>& perm, int R) {
  std::vector<int> source(static_cast<std::size_t>(R), -1);
  for (std::size_t i = 0; i < perm.size(); ++i)
    if (f.present[i] && perm[i] < R) source[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  int fallback = -1;
  for (std::size_t i = 0; i < f.present.size(); ++i)
    if (f.present[i]) {
      fallback = static_cast<int>(i);
      break;
    }
  if (fallback < 0) throw NumericError("no fitted state available");
  std::vector<std::vector<double>> per;
  mr.p_beta.assign(static_cast<std::size_t>(R), kNaN);
  for (int r = 0; r < R; ++r) {
    const int s = source[static_cast<std::size_t>(r)];
    const int use = s >= 0 ? s : fallback;
    per.push_back(state_values(f.beta[static_cast<std::size_t>(use)], f.kernels[static_cast<std::size_t>(use)]));
    if (s >= 0) mr.p_beta[static_cast<std::size_t>(r)] = f.p_beta[static_cast<std::size_t>(s)];
  }
  mr.estimates = interleave(per);
}

std::vector<int> true_labels(const CaseControlData& data, const SimulatedTrack& sim) {
  std::vector<int> out;
  for (std::size_t s = 0; s < data.n_sets(); ++s) out.push_back(sim.states[data.set_origin[s]]);
  return out;
}

}  // namespace

RunRecord run_single(const ScenarioSpec& spec, const Habitat& habitat, std::size_t run) {
  RunRecord rec;
  rec.run = run;
  const int R = reported_states(spec);
  const int n_true = spec.n_true_states();
  SimulatedTrack sim;
  try {
    Rng rng(spec.seed, label(spec, "track"), run);
    const Raster& g = habitat.geometry();
    const Point start{0.5 * (g.x0 + g.x_max()), 0.5 * (g.y0 + g.y_max())};
    sim = simulate_track(spec.chain, spec.truth, habitat, spec.T, start, rng);
  } catch (const Error& e) {
    rec.error = std::string("simulation failed: ") + e.what();
    return rec;
  }
  const auto steps = observed_steps(sim.track);

  MultiStartOptions opts;
  opts.n_starts = spec.n_starts;
  opts.delta_mode = spec.delta_mode;
  opts.threads = 1;

  for (std::size_t M : spec.M) {
    CaseControlData data;
    try {
      SamplingScheme scheme;
      if (spec.scheme == "importance") {
        const auto proposal = fit_proposal(sim.track, {StepFamily::Gamma, TurnFamily::Uniform});
        scheme = SamplingScheme::importance(proposal.step);
      } else {
        double lmax = 0.0;
        for (const auto& s : steps) lmax = std::max(lmax, s.l);
        scheme = SamplingScheme::uniform_steps(lmax + 10.0);
      }
      data = build_choice_sets(steps, habitat, kStudyKernel, scheme, M,
                               derive_seed(spec.seed, label(spec, "controls"), run, M));
    } catch (const Error& e) {
      rec.error = std::string("case-control construction failed: ") + e.what();
      return rec;
    }
    const auto truth = true_labels(data, sim);

    auto two_state_starts = [&](bool zero_beta) {
      std::vector<MsParams> starts;
      if (!spec.true_starts) return starts;
      std::vector<NaturalKernel> k;
      std::vector<std::vector<double>> b;
      for (int r = 0; r < 2; ++r) {
        const auto& t = spec.truth[static_cast<std::size_t>(std::min(r, n_true - 1))];
        k.push_back(t.kernel);
        b.push_back(zero_beta ? std::vector<double>(t.beta.size(), 0.0) : t.beta);
      }
      const Eigen::MatrixXd g = n_true == 2 ? spec.chain.gamma : MarkovChainSpec::persistent(2, 0.9).gamma;
      starts.push_back(params_from_natural(data, g, k, b, spec.delta_mode));
      return starts;
    };

    for (const auto& method : spec.methods) {
      MethodRun mr;
      mr.method = method;
      mr.M = M;
      try {
        const std::uint64_t fit_seed = derive_seed(spec.seed, label(spec, "fit-" + method), run, M);
        if (method == "tsissa") {
          const auto ts = fit_tsissa(sim.track, habitat, kStudyKernel, 2, M, opts, fit_seed);
          std::vector<int> tl;
          for (const auto& s : ts.steps) tl.push_back(sim.states[s.origin]);
          const auto [mis, perm] = align_states(tl, ts.decoded, 2, n_true);
          mr.misclassification = mis;
          Fitted f;
          for (const auto& sf : ts.state_fits) {
            if (sf) {
              const Fitted one = from_fit(*sf);
              f.beta.push_back(one.beta[0]);
              f.kernels.push_back(one.kernels[0]);
              f.p_beta.push_back(one.p_beta[0]);
              f.present.push_back(true);
            } else {
              f.beta.push_back(0.0);
              f.kernels.push_back({});
              f.p_beta.push_back(kNaN);
              f.present.push_back(false);
            }
          }
          fill_estimates(mr, f, perm, R);
          mr.converged = ts.hmm.converged;
        } else {
          FitResult fit;
          if (method == "issa") {
            fit = fit_model(ModelKind::iSSA, 1, data, opts, fit_seed);
          } else {
            MultiStartOptions o = opts;
            o.starts = two_state_starts(method == "hmm");
            fit = fit_multistart(data, 2, method == "hmm", o, fit_seed);
          }
          std::vector<int> perm{0};
          if (fit.params.n_states() > 1) {
            const auto [mis, p] = align_states(truth, fit.states, fit.params.n_states(), n_true);
            mr.misclassification = mis;
            perm = p;
          }
          fill_estimates(mr, from_fit(fit), perm, R);
          mr.has_ic = true;
          mr.loglik = fit.loglik;
          mr.aic = fit.aic;
          mr.bic = fit.bic;
          mr.diagnostics = fit.diagnostics;
          mr.converged = fit.converged;
          if (method == "hmm") std::fill(mr.p_beta.begin(), mr.p_beta.end(), kNaN);
        }
        mr.ok = true;
      } catch (const Error& e) {
        mr.error = e.what();
      }
      rec.methods.push_back(std::move(mr));
    }
  }
  rec.ok = true;
  return rec;
}

const MethodMetrics* StudyMetrics::find(const std::string& method, std::size_t M) const {
  for (const auto& m : methods)
    if (m.method == method && m.M == M) return &m;
  return nullptr;
}

StudyMetrics compute_metrics(const ScenarioSpec& spec, const std::vector<RunRecord>& runs) {
  StudyMetrics sm;
  sm.scenario = spec.scenario;
  sm.parameters = reported_parameters(spec);
  sm.truth = reported_truth(spec);
  sm.n_runs = runs.size();
  for (const auto& r : runs) sm.n_completed += r.ok ? 1 : 0;
  const int R = reported_states(spec);
  const std::size_t P = sm.parameters.size();

  for (const auto& method : spec.methods)
    for (std::size_t M : spec.M) {
      MethodMetrics mm;
      mm.method = method;
      mm.M = M;
      mm.bias.assign(P, 0.0);
      mm.rmse.assign(P, 0.0);
      mm.pct_significant.assign(static_cast<std::size_t>(R), 0.0);
      mm.n_significance.assign(static_cast<std::size_t>(R), 0);
      std::vector<double> mis;
      std::size_t flags[7] = {0, 0, 0, 0, 0, 0, 0};
      for (const auto& run : runs)
        for (const auto& mr : run.methods) {
          if (mr.method != method || mr.M != M || !mr.ok) continue;
          ++mm.n_completed;
          for (std::size_t p = 0; p < P; ++p) {
            const double d = mr.estimates[p] - sm.truth[p];
            mm.bias[p] += d;
            mm.rmse[p] += d * d;
          }
          if (std::isfinite(mr.misclassification)) mis.push_back(mr.misclassification);
          for (int r = 0; r < R; ++r) {
            const double pv = mr.p_beta[static_cast<std::size_t>(r)];
            if (std::isnan(pv)) continue;
            ++mm.n_significance[static_cast<std::size_t>(r)];
            if (pv < 0.05) mm.pct_significant[static_cast<std::size_t>(r)] += 1.0;
          }
          const auto& d = mr.diagnostics;
          flags[0] += d.near_empty_state;
          flags[1] += d.any();
          flags[2] += d.single_start_max;
          flags[3] += d.boundary_parameter;
          flags[4] += d.low_step_variance;
          flags[5] += d.all_low_persistence;
          flags[6] += d.hessian_not_pd;
        }
      if (mm.n_completed > 0) {
        const double n = static_cast<double>(mm.n_completed);
        for (std::size_t p = 0; p < P; ++p) {
          mm.bias[p] /= n;
          mm.rmse[p] = std::sqrt(mm.rmse[p] / n);
        }
        double* pct[7] = {&mm.pct_near_empty, &mm.pct_any_flag, &mm.pct_single_start_max, &mm.pct_boundary,
                          &mm.pct_low_variance, &mm.pct_low_persistence, &mm.pct_hessian_not_pd};
        for (int k = 0; k < 7; ++k) *pct[k] = 100.0 * static_cast<double>(flags[k]) / n;
      } else {
        std::fill(mm.bias.begin(), mm.bias.end(), kNaN);
        std::fill(mm.rmse.begin(), mm.rmse.end(), kNaN);
      }
      for (int r = 0; r < R; ++r) {
        const auto k = static_cast<std::size_t>(r);
        mm.pct_significant[k] = mm.n_significance[k] > 0
                                    ? 100.0 * mm.pct_significant[k] / static_cast<double>(mm.n_significance[k])
                                    : kNaN;
      }
      if (!mis.empty()) {
        const double mean = std::accumulate(mis.begin(), mis.end(), 0.0) / static_cast<double>(mis.size());
        double ss = 0.0;
        for (double v : mis) ss += (v - mean) * (v - mean);
        mm.misclass_mean = mean;
        mm.misclass_sd = mis.size() > 1 ? std::sqrt(ss / static_cast<double>(mis.size() - 1)) : 0.0;
      }
      sm.methods.push_back(std::move(mm));
    }

  std::vector<std::string> cands;
  for (const char* c : {"issa", "hmm", "msissa"})
    if (has_method(spec, c)) cands.push_back(c);
  if (cands.size() >= 2)
    for (std::size_t M : spec.M) {
      SelectionMetrics sel;
      sel.M = M;
      sel.candidates = cands;
      sel.pct_aic.assign(cands.size(), 0.0);
      sel.pct_bic.assign(cands.size(), 0.0);
      for (const auto& run : runs) {
        std::vector<const MethodRun*> found(cands.size(), nullptr);
        for (const auto& mr : run.methods)
          for (std::size_t c = 0; c < cands.size(); ++c)
            if (mr.ok && mr.has_ic && mr.M == M && mr.method == cands[c]) found[c] = &mr;
        if (std::any_of(found.begin(), found.end(), [](auto* p) { return p == nullptr; })) continue;
        ++sel.n_runs;
        std::size_t ba = 0, bb = 0;
        for (std::size_t c = 1; c < cands.size(); ++c) {
          if (found[c]->aic < found[ba]->aic) ba = c;
          if (found[c]->bic < found[bb]->bic) bb = c;
        }
        sel.pct_aic[ba] += 1.0;
        sel.pct_bic[bb] += 1.0;
      }
      for (std::size_t c = 0; c < cands.size(); ++c) {
        const double n = std::max<double>(1.0, static_cast<double>(sel.n_runs));
        sel.pct_aic[c] = 100.0 * sel.pct_aic[c] / n;
        sel.pct_bic[c] = 100.0 * sel.pct_bic[c] / n;
      }
      sm.selection.push_back(std::move(sel));
    }
  return sm;
}

StudyResult run_study(const ScenarioSpec& spec, const ProgressCallback& progress) {
  spec.validate();
  StudyResult res;
  res.spec = spec;
  const Habitat habitat = study_landscape(spec);
  res.landscape = summarize(habitat.geometry());
  res.runs.resize(spec.n_runs);

  std::atomic<std::size_t> next{0}, done{0};
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < spec.n_runs; i = next++) {
      res.runs[i] = run_single(spec, habitat, i);
      const std::size_t d = ++done;
      if (progress) {
        std::lock_guard<std::mutex> lock(mu);
        progress(d, spec.n_runs);
      }
    }
  };
  const unsigned t = std::max(1u, std::min<unsigned>(spec.threads, static_cast<unsigned>(spec.n_runs)));
  if (t == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < t; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  res.metrics = compute_metrics(spec, res.runs);
  return res;
}

std::vector<DegeneracyFlags> degeneracy_report(const std::vector<FitResult>& fits) {
  std::vector<DegeneracyFlags> out;
  for (const auto& f : fits) {
    DegeneracyFlags d;
    const auto& g = f.diagnostics;
    d.single_start_max = g.single_start_max;
    d.near_empty_state = g.near_empty_state;
    d.boundary_parameter = g.boundary_parameter;
    d.low_step_variance = g.low_step_variance;
    d.all_low_persistence = g.all_low_persistence;
    out.push_back(d);
  }
  return out;
}

namespace {

std::string num(double v) { return format_number(v, 6); }

// The value written to JSON is the one printed to CSV, parsed back.
Json jnum(double v) {
  if (!std::isfinite(v)) return nullptr;
  return std::stod(num(v));
}

class Csv {
 public:
  explicit Csv(const std::filesystem::path& p) : out_(p) {
    if (!out_) throw IoError("cannot write '" + p.string() + "'");
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
    if (!out_) throw IoError("failed writing a results table");
  }

 private:
  std::ofstream out_;
};

}  // namespace

void report_tables(const StudyResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create results directory '" + dir.string() + "': " + ec.message());
  const auto& spec = result.spec;
  const auto& m = result.metrics;
  const std::string pre = "scen" + std::to_string(spec.scenario) + "_";
  const int R = reported_states(spec);
  Json js;
  js["scenario"] = spec.scenario;
  js["spec"] = scenario_to_json(spec);
  js["n_runs"] = m.n_runs;
  js["n_completed"] = m.n_completed;
  js["landscape"] = {{"mean", jnum(result.landscape.mean)},
                     {"variance", jnum(result.landscape.variance)},
                     {"lag1_correlation", jnum(result.landscape.lag1_correlation)}};

  // table2: share of runs with significant selection coefficients.
  {
    Csv csv(dir / (pre + "table2.csv"));
    std::vector<std::string> h{"method", "M"};
    for (int r = 1; r <= R; ++r) h.push_back("beta_" + std::to_string(r));
    for (int r = 1; r <= R; ++r) h.push_back("n_beta_" + std::to_string(r));
    csv.row(h);
    Json rows = Json::array();
    for (const auto& mm : m.methods) {
      if (mm.method == "hmm") continue;
      std::vector<std::string> c{mm.method, std::to_string(mm.M)};
      Json jr{{"method", mm.method}, {"M", mm.M}};
      for (int r = 0; r < R; ++r) {
        c.push_back(num(mm.pct_significant[static_cast<std::size_t>(r)]));
        jr["beta_" + std::to_string(r + 1)] = jnum(mm.pct_significant[static_cast<std::size_t>(r)]);
      }
      for (int r = 0; r < R; ++r) {
        c.push_back(std::to_string(mm.n_significance[static_cast<std::size_t>(r)]));
        jr["n_beta_" + std::to_string(r + 1)] = mm.n_significance[static_cast<std::size_t>(r)];
      }
      csv.row(c);
      rows.push_back(jr);
    }
    js["table2"] = rows;
  }

  // table3: misclassification, one row per scenario.
  {
    Csv csv(dir / (pre + "table3.csv"));
    std::vector<std::string> h{"scenario"}, c{std::to_string(spec.scenario)};
    Json jr{{"scenario", spec.scenario}};
    for (const auto& mm : m.methods) {
      if (mm.method == "issa") continue;
      const std::string key = mm.method + "_M" + std::to_string(mm.M);
      h.push_back(key + "_mean");
      h.push_back(key + "_sd");
      c.push_back(num(mm.misclass_mean));
      c.push_back(num(mm.misclass_sd));
      jr[key + "_mean"] = jnum(mm.misclass_mean);
      jr[key + "_sd"] = jnum(mm.misclass_sd);
    }
    csv.row(h);
    csv.row(c);
    js["table3"] = Json::array({jr});
  }

  // table4: share of runs in which each candidate is selected.
  {
    Csv csv(dir / (pre + "table4.csv"));
    Json rows = Json::array();
    std::vector<std::string> h{"M", "n_runs"};
    if (!m.selection.empty()) {
      for (const auto& c : m.selection.front().candidates) h.push_back("aic_" + c);
      for (const auto& c : m.selection.front().candidates) h.push_back("bic_" + c);
    }
    csv.row(h);
    for (const auto& sel : m.selection) {
      std::vector<std::string> c{std::to_string(sel.M), std::to_string(sel.n_runs)};
      Json jr{{"M", sel.M}, {"n_runs", sel.n_runs}};
      for (std::size_t k = 0; k < sel.candidates.size(); ++k) {
        c.push_back(num(sel.pct_aic[k]));
        jr["aic_" + sel.candidates[k]] = jnum(sel.pct_aic[k]);
      }
      for (std::size_t k = 0; k < sel.candidates.size(); ++k) {
        c.push_back(num(sel.pct_bic[k]));
        jr["bic_" + sel.candidates[k]] = jnum(sel.pct_bic[k]);
      }
      csv.row(c);
      rows.push_back(jr);
    }
    js["table4"] = rows;
  }

  // tableS3/tableS4: bias and RMSE per parameter.
  for (const auto& [name, pick] :
       std::vector<std::pair<std::string, bool>>{{"tableS3", true}, {"tableS4", false}}) {
    Csv csv(dir / (pre + name + ".csv"));
    std::vector<std::string> h{"method", "M", "n_completed"};
    for (const auto& p : m.parameters) h.push_back(p);
    csv.row(h);
    Json rows = Json::array();
    for (const auto& mm : m.methods) {
      std::vector<std::string> c{mm.method, std::to_string(mm.M), std::to_string(mm.n_completed)};
      Json jr{{"method", mm.method}, {"M", mm.M}, {"n_completed", mm.n_completed}};
      const auto& v = pick ? mm.bias : mm.rmse;
      for (std::size_t p = 0; p < m.parameters.size(); ++p) {
        c.push_back(num(v[p]));
        jr[m.parameters[p]] = jnum(v[p]);
      }
      csv.row(c);
      rows.push_back(jr);
    }
    js[name] = rows;
  }

  // Degeneracy flags per run of the two-state fits.
  {
    Csv csv(dir / (pre + "degeneracy.csv"));
    csv.row({"run", "method", "M", "single_start_max", "near_empty_state", "boundary_parameter",
             "low_step_variance", "all_low_persistence", "hessian_not_pd", "best_ll_fraction"});
    Json summary = Json::array();
    for (const auto& run : result.runs)
      for (const auto& mr : run.methods) {
        if (!mr.ok || (mr.method != "msissa" && mr.method != "hmm")) continue;
        const auto& d = mr.diagnostics;
        csv.row({std::to_string(run.run), mr.method, std::to_string(mr.M), std::to_string(d.single_start_max),
                 std::to_string(d.near_empty_state), std::to_string(d.boundary_parameter),
                 std::to_string(d.low_step_variance), std::to_string(d.all_low_persistence),
                 std::to_string(d.hessian_not_pd), num(d.best_ll_fraction)});
      }
    for (const auto& mm : m.methods) {
      if (mm.method != "msissa" && mm.method != "hmm") continue;
      summary.push_back({{"method", mm.method},
                         {"M", mm.M},
                         {"near_empty_state", jnum(mm.pct_near_empty)},
                         {"any", jnum(mm.pct_any_flag)},
                         {"single_start_max", jnum(mm.pct_single_start_max)},
                         {"boundary_parameter", jnum(mm.pct_boundary)},
                         {"low_step_variance", jnum(mm.pct_low_variance)},
                         {"all_low_persistence", jnum(mm.pct_low_persistence)},
                         {"hessian_not_pd", jnum(mm.pct_hessian_not_pd)}});
    }
    js["degeneracy"] = summary;
  }

  // Long-format per-run records.
  {
    Csv csv(dir / (pre + "runs.csv"));
    csv.row({"run", "method", "M", "quantity", "estimate", "truth"});
    for (const auto& run : result.runs) {
      if (!run.ok) {
        csv.row({std::to_string(run.run), "all", "NA", "error", "NA", "NA"});
        continue;
      }
      for (const auto& mr : run.methods) {
        const std::string r = std::to_string(run.run), M = std::to_string(mr.M);
        if (!mr.ok) {
          csv.row({r, mr.method, M, "error", "NA", "NA"});
          continue;
        }
        for (std::size_t p = 0; p < m.parameters.size(); ++p)
          csv.row({r, mr.method, M, m.parameters[p], num(mr.estimates[p]), num(m.truth[p])});
        for (int k = 0; k < R; ++k)
          csv.row({r, mr.method, M, "p_beta_" + std::to_string(k + 1), num(mr.p_beta[static_cast<std::size_t>(k)]),
                   "NA"});
        csv.row({r, mr.method, M, "misclassification", num(mr.misclassification), "NA"});
        if (mr.has_ic) {
          csv.row({r, mr.method, M, "loglik", num(mr.loglik), "NA"});
          csv.row({r, mr.method, M, "aic", num(mr.aic), "NA"});
          csv.row({r, mr.method, M, "bic", num(mr.bic), "NA"});
        }
      }
    }
  }

  write_json(js, dir / (pre + "metrics.json"));
}

}  // namespace msissa
