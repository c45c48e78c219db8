// msissa: simulate landscapes and tracks, build case-control data, fit
// multistate step-selection models and run the simulation study.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msissa/error.hpp"
#include "msissa/landscape.hpp"
#include "msissa/models.hpp"
#include "msissa/sampling.hpp"
#include "msissa/serialize.hpp"
#include "msissa/simulate.hpp"
#include "msissa/study.hpp"

namespace fs = std::filesystem;
using namespace msissa;

namespace {

enum Exit { kOk = 0, kValidation = 2, kNumeric = 3, kIo = 4 };

// Raster arguments are `path` or `name=path`; the name defaults to the file stem.
Habitat load_habitat(const std::vector<std::string>& specs) {
  if (specs.empty()) throw ValidationError("at least one --raster is required");
  Habitat h;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    const fs::path path = eq == std::string::npos ? fs::path(s) : fs::path(s.substr(eq + 1));
    const std::string name = eq == std::string::npos ? path.stem().string() : s.substr(0, eq);
    h.names.push_back(name);
    h.layers.push_back(read_raster(path));
  }
  h.validate();
  return h;
}

Point parse_point(const std::string& s) {
  Point p;
  char comma = 0;
  std::istringstream in(s);
  if (!(in >> p.x >> comma >> p.y) || comma != ',') throw ValidationError("expected a location as x,y, got '" + s + "'");
  return p;
}

void write_states(const std::vector<int>& burst, const std::vector<int>& t, const std::vector<int>& states,
                  const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "burst,t,state\n";
  for (std::size_t k = 0; k < states.size(); ++k) out << burst[k] << ',' << t[k] << ',' << states[k] + 1 << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string fmt(double v) { return format_number(v, 6); }

// ---------------------------------------------------------------------------

struct LandscapeArgs {
  GrfSpec spec;
  std::uint64_t seed = kDefaultSeed;
  std::string out = "landscape.asc";
  std::string method = "fft";
};

int simulate_landscape(const LandscapeArgs& a) {
  Rng rng(a.seed, "landscape");
  const Raster r = a.method == "cholesky" ? simulate_grf_cholesky(a.spec, rng) : simulate_grf(a.spec, rng);
  write_raster(r, a.out);
  const auto s = summarize(r);
  std::cout << "wrote " << a.out << " (" << r.n_rows << " x " << r.n_cols << ")\n"
            << "mean " << fmt(s.mean) << "\nvariance " << fmt(s.variance) << "\nlag1_correlation "
            << fmt(s.lag1_correlation) << "\nmin " << fmt(s.min) << "\nmax " << fmt(s.max) << '\n';
  return kOk;
}

struct TrackArgs {
  int scenario = 0;
  std::string model;
  std::vector<std::string> rasters;
  std::size_t T = 1000;
  std::uint64_t seed = kDefaultSeed;
  std::string start;
  std::string out = "track.csv";
  std::string states_out;
  double range = 10.0;
};

int simulate_track_cmd(const TrackArgs& a) {
  if (a.scenario == 0 && a.model.empty()) throw ValidationError("give --scenario or --model");
  if (a.scenario != 0 && !a.model.empty()) throw ValidationError("--scenario and --model are exclusive");
  if (a.T < 3) throw ValidationError("T must be at least 3 (a turning angle needs three locations)");
  MarkovChainSpec chain;
  std::vector<StateModel> states;
  Habitat habitat;
  if (a.scenario != 0) {
    auto spec = ScenarioSpec::preset(a.scenario);
    spec.landscape.range = a.range;
    chain = spec.chain;
    states = spec.truth;
    habitat = a.rasters.empty() ? study_landscape(spec) : load_habitat(a.rasters);
  } else {
    const auto m = simulation_model_from_json(read_json(a.model));
    chain = m.chain;
    states = m.states;
    habitat = load_habitat(a.rasters);
  }
  const Raster& g = habitat.geometry();
  const Point start = a.start.empty() ? Point{0.5 * (g.x0 + g.x_max()), 0.5 * (g.y0 + g.y_max())} : parse_point(a.start);
  Rng rng(a.seed, "track");
  const auto sim = simulate_track(chain, states, habitat, a.T, start, rng);
  write_track(sim.track, a.out);
  const fs::path states_path = a.states_out.empty() ? fs::path(a.out).replace_extension(".states.csv") : fs::path(a.states_out);
  std::vector<int> burst(sim.states.size()), t(sim.states.size());
  for (std::size_t j = 0; j < sim.states.size(); ++j) {
    burst[j] = sim.track.burst[j];
    t[j] = sim.track.t[j];
  }
  write_states(burst, t, sim.states, states_path);
  std::cout << "wrote " << a.out << " (" << sim.track.size() << " locations) and " << states_path.string() << '\n';
  return kOk;
}

struct SampleArgs {
  std::string track;
  std::vector<std::string> rasters;
  std::string scheme = "importance";
  std::size_t M = 20;
  std::string step = "gamma";
  std::string turn = "vonmises";
  bool vm_proposal = false;
  bool moments = false;
  double max_step = 0.0;
  double quantile = 0.999;
  double resolution = 1.0;
  double radius = 0.0;
  std::uint64_t seed = kDefaultSeed;
  std::string out = "case_control.csv";
};

int sample_cmd(const SampleArgs& a) {
  const MovementKernelSpec kernel{step_family_from_string(a.step), turn_family_from_string(a.turn)};
  const Track track = read_track(a.track);
  const Habitat habitat = load_habitat(a.rasters);
  SamplingScheme scheme;
  const auto kind = scheme_kind_from_string(a.scheme);
  if (kind == SchemeKind::Grid) {
    if (a.radius <= 0.0) throw ValidationError("--radius must be positive for the grid scheme");
    scheme = SamplingScheme::grid(a.resolution, a.radius);
  } else {
    const MovementKernelSpec proposal_spec{kernel.step, a.vm_proposal ? TurnFamily::VonMises : TurnFamily::Uniform};
    if (kind == SchemeKind::UniformSteps && a.max_step > 0.0) {
      scheme = SamplingScheme::uniform_steps(a.max_step);
    } else {
      const auto proposal = fit_proposal(track, proposal_spec, a.moments);
      if (kind == SchemeKind::UniformSteps) {
        scheme = SamplingScheme::uniform_from_proposal(proposal.step, a.quantile);
      } else {
        std::optional<VonMisesTurn> vm;
        if (const auto* v = std::get_if<VonMisesTurn>(&proposal.turn)) vm = *v;
        scheme = SamplingScheme::importance(proposal.step, vm);
      }
    }
  }
  Rng rng(a.seed, "controls");
  const auto data = generate_choice_sets(track, habitat, kernel, scheme, a.M, rng);
  write_case_control(data, a.out);
  std::cout << "wrote " << a.out << " (" << data.n_sets() << " choice sets, " << data.n_rows() << " rows)\n";
  return kOk;
}

struct FitArgs {
  std::string data;
  std::string track;
  std::vector<std::string> rasters;
  std::string model = "msissa";
  int N = 2;
  std::size_t starts = 50;
  std::string delta = "uniform";
  std::string step = "gamma";
  std::string turn = "vonmises";
  std::size_t M = 20;
  unsigned threads = 1;
  bool no_se = false;
  bool strict = false;
  std::uint64_t seed = kDefaultSeed;
  std::string out = "fit.json";
  std::string states_out;
};

void print_fit_summary(const FitResult& f) {
  std::cout << to_string(f.kind) << " with " << f.params.n_states() << " state(s)\n"
            << "loglik " << fmt(f.loglik) << "  AIC " << fmt(f.aic) << "  BIC " << fmt(f.bic) << "  parameters "
            << f.n_free << "  choice sets " << f.n_obs << '\n'
            << "converged " << (f.converged ? "yes" : "no") << " after " << f.iterations << " iterations (best start "
            << f.start_index + 1 << " of " << std::max<std::size_t>(1, f.ll_per_start.size()) << ")\n";
  const auto names = f.kernel.natural_names();
  const auto kernels = f.natural_kernels();
  for (int i = 0; i < f.params.n_states(); ++i) {
    const auto si = static_cast<std::size_t>(i);
    std::cout << "state " << i + 1 << ":\n";
    const auto nat = natural_values(kernels[si]);
    for (std::size_t k = 0; k < names.size(); ++k) {
      std::cout << "  " << names[k] << ' ' << fmt(nat[k]);
      if (f.se_available && k < f.inference[si].se_natural.size())
        std::cout << " (se " << fmt(f.inference[si].se_natural[k]) << ')';
      std::cout << '\n';
    }
    for (std::size_t j = 0; j < f.params.states[si].beta.size(); ++j) {
      std::cout << "  beta[" << f.habitat_names[j] << "] " << fmt(f.params.states[si].beta[j]);
      if (f.se_available && j < f.inference[si].se_beta.size())
        std::cout << " (se " << fmt(f.inference[si].se_beta[j]) << ", p " << fmt(f.inference[si].p_beta[j]) << ')';
      std::cout << '\n';
    }
  }
  if (f.params.n_states() > 1) {
    std::cout << "transition matrix:\n";
    for (Eigen::Index i = 0; i < f.params.gamma.rows(); ++i) {
      std::cout << ' ';
      for (Eigen::Index j = 0; j < f.params.gamma.cols(); ++j) std::cout << ' ' << fmt(f.params.gamma(i, j));
      std::cout << '\n';
    }
  }
  const auto& d = f.diagnostics;
  std::vector<std::string> flags;
  if (d.single_start_max) flags.push_back("single_start_max");
  if (d.near_empty_state) flags.push_back("near_empty_state");
  if (d.boundary_parameter) flags.push_back("boundary_parameter");
  if (d.low_step_variance) flags.push_back("low_step_variance");
  if (d.all_low_persistence) flags.push_back("all_low_persistence");
  if (d.hessian_not_pd) flags.push_back("hessian_not_pd");
  std::cout << "flags:";
  if (flags.empty()) std::cout << " none";
  for (const auto& s : flags) std::cout << ' ' << s;
  std::cout << '\n';
}

int fit_cmd(const FitArgs& a) {
  const ModelKind kind = model_kind_from_string(a.model);
  MultiStartOptions opts;
  opts.n_starts = a.starts;
  opts.delta_mode = delta_mode_from_string(a.delta);
  opts.threads = a.threads;
  opts.fit.compute_se = !a.no_se;
  const fs::path states_path =
      a.states_out.empty() ? fs::path(a.out).replace_extension(".states.csv") : fs::path(a.states_out);
  const MovementKernelSpec kernel{step_family_from_string(a.step), turn_family_from_string(a.turn)};
  bool converged = true;

  if (kind == ModelKind::MovementHMM || kind == ModelKind::TSiSSA) {
    if (a.track.empty()) throw ValidationError("--track is required for model " + a.model);
    const Track track = read_track(a.track);
    if (kind == ModelKind::MovementHMM) {
      const auto steps = observed_steps(track);
      const auto fit = fit_movement_hmm(movement_observations(steps), kernel, a.N, opts, a.seed);
      write_json(movement_fit_to_json(fit), a.out);
      std::vector<int> burst, t;
      for (const auto& s : steps) {
        burst.push_back(s.burst);
        t.push_back(s.t);
      }
      write_states(burst, t, fit.states, states_path);
      std::cout << "movement HMM with " << a.N << " states: loglik " << fmt(fit.loglik) << "  AIC " << fmt(fit.aic)
                << "  BIC " << fmt(fit.bic) << '\n';
      converged = fit.converged;
    } else {
      const Habitat habitat = load_habitat(a.rasters);
      const auto res = fit_tsissa(track, habitat, kernel, a.N, a.M, opts, a.seed);
      write_json(tsissa_to_json(res), a.out);
      std::vector<int> burst, t;
      for (const auto& s : res.steps) {
        burst.push_back(s.burst);
        t.push_back(s.t);
      }
      write_states(burst, t, res.decoded, states_path);
      converged = res.hmm.converged;
      for (std::size_t i = 0; i < res.state_fits.size(); ++i) {
        std::cout << "-- HMM state " << i + 1 << " (" << res.state_counts[i] << " steps)\n";
        if (res.state_fits[i]) {
          print_fit_summary(*res.state_fits[i]);
          converged = converged && res.state_fits[i]->converged;
        } else {
          std::cout << "too few steps for a selection fit\n";
        }
      }
    }
  } else {
    if (a.data.empty()) throw ValidationError("--data is required for model " + a.model);
    const auto data = read_case_control(a.data);
    const int N = kind == ModelKind::iSSA ? 1 : a.N;
    const auto fit = fit_model(kind, N, data, opts, a.seed);
    write_json(fit_to_json(fit), a.out);
    write_states(data.set_burst, data.set_t, fit.states, states_path);
    print_fit_summary(fit);
    converged = fit.converged;
  }
  std::cout << "wrote " << a.out << " and " << states_path.string() << '\n';
  if (!converged && a.strict) {
    std::cerr << "error: the optimizer did not converge\n";
    return kNumeric;
  }
  return kOk;
}

struct StudyArgs {
  int scenario = 1;
  std::string profile = "scaled";
  std::string spec;
  std::size_t runs = 0;
  std::vector<std::size_t> M;
  std::size_t starts = 0;
  unsigned threads = 1;
  bool true_starts = false;
  std::string scheme;
  double range = 0.0;
  std::vector<std::string> methods;
  std::uint64_t seed = kDefaultSeed;
  std::string out = "results";
  bool quiet = false;
};

int study_cmd(const StudyArgs& a, bool seed_given) {
  ScenarioSpec spec;
  if (!a.spec.empty()) {
    spec = scenario_from_json(read_json(a.spec));
  } else {
    spec = ScenarioSpec::preset(a.scenario, a.profile == "full");
    spec.seed = a.seed;
  }
  if (seed_given) spec.seed = a.seed;
  if (a.runs > 0) spec.n_runs = a.runs;
  if (!a.M.empty()) spec.M = a.M;
  if (a.starts > 0) spec.n_starts = a.starts;
  if (a.true_starts) spec.true_starts = true;
  if (!a.scheme.empty()) spec.scheme = a.scheme;
  if (a.range > 0.0) spec.landscape.range = a.range;
  if (!a.methods.empty()) spec.methods = a.methods;
  spec.threads = a.threads;
  spec.validate();

  ProgressCallback progress;
  if (!a.quiet)
    progress = [](std::size_t done, std::size_t total) {
      std::cerr << "\rrun " << done << '/' << total << std::flush;
      if (done == total) std::cerr << '\n';
    };
  const auto result = run_study(spec, progress);
  report_tables(result, a.out);
  std::size_t failed = 0;
  for (const auto& r : result.runs)
    for (const auto& m : r.methods) failed += m.ok ? 0 : 1;
  std::cout << "scenario " << spec.scenario << ": " << result.metrics.n_completed << " of " << spec.n_runs
            << " runs completed, " << failed << " failed fits; tables in " << a.out << '\n';
  for (const auto& m : result.metrics.methods) {
    std::cout << "  " << m.method << " M=" << m.M << ": misclassification " << fmt(m.misclass_mean) << "%, beta significant";
    for (double p : m.pct_significant) std::cout << ' ' << fmt(p) << '%';
    std::cout << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multistate integrated step-selection analysis"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Silence warnings");

  LandscapeArgs la;
  auto* cl = app.add_subcommand("simulate-landscape", "Simulate an exponential-covariance Gaussian random field");
  cl->add_option("--sigma2", la.spec.sill, "Sill (field variance)")->capture_default_str();
  cl->add_option("--range", la.spec.range, "Range parameter in map units")->capture_default_str();
  cl->add_option("--rows", la.spec.n_rows, "Number of rows")->capture_default_str();
  cl->add_option("--cols", la.spec.n_cols, "Number of columns")->capture_default_str();
  cl->add_option("--cell-size", la.spec.cell_size, "Cell size")->capture_default_str();
  cl->add_option("--method", la.method, "fft (circulant embedding) or cholesky")
      ->check(CLI::IsMember({"fft", "cholesky"}))
      ->capture_default_str();
  cl->add_option("--seed", la.seed, "Random seed")->capture_default_str();
  cl->add_option("-o,--out", la.out, "Output ESRI ASCII grid")->capture_default_str();

  TrackArgs ta;
  auto* ct = app.add_subcommand("simulate-track", "Simulate a multistate step-selection track");
  ct->add_option("--scenario", ta.scenario, "Study scenario 1-4");
  ct->add_option("--model", ta.model, "Model JSON with Gamma, delta and per-state step, turn, beta");
  ct->add_option("--raster", ta.rasters, "Habitat layer as path or name=path (repeatable)");
  ct->add_option("--range", ta.range, "Landscape range when the scenario landscape is generated")->capture_default_str();
  ct->add_option("--T", ta.T, "Number of locations")->capture_default_str();
  ct->add_option("--start", ta.start, "Start location x,y (default: grid centre)");
  ct->add_option("--seed", ta.seed, "Random seed")->capture_default_str();
  ct->add_option("-o,--out", ta.out, "Track CSV")->capture_default_str();
  ct->add_option("--states-out", ta.states_out, "True states CSV (default: <out>.states.csv)");

  SampleArgs sa;
  auto* cs = app.add_subcommand("sample", "Build case-control data from a track");
  cs->add_option("--track", sa.track, "Track CSV (burst,t,x,y)")->required();
  cs->add_option("--raster", sa.rasters, "Habitat layer as path or name=path (repeatable)")->required();
  cs->add_option("--scheme", sa.scheme, "importance, uniform or grid")
      ->check(CLI::IsMember({"importance", "uniform", "grid"}))
      ->capture_default_str();
  cs->add_option("--M", sa.M, "Controls per step")->capture_default_str();
  cs->add_option("--step", sa.step, "Step family: exponential, gamma, lognormal")->capture_default_str();
  cs->add_option("--turn", sa.turn, "Turn family: uniform, vonmises")->capture_default_str();
  cs->add_flag("--vm-proposal", sa.vm_proposal, "Draw control turning angles from a fitted von Mises");
  cs->add_flag("--moments", sa.moments, "Fit the step proposal by moments instead of maximum likelihood");
  cs->add_option("--max-step", sa.max_step, "Upper step bound of the uniform scheme (default: proposal quantile)");
  cs->add_option("--quantile", sa.quantile, "Proposal quantile bounding uniform steps")->capture_default_str();
  cs->add_option("--resolution", sa.resolution, "Grid spacing")->capture_default_str();
  cs->add_option("--radius", sa.radius, "Grid radius");
  cs->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
  cs->add_option("-o,--out", sa.out, "Case-control CSV")->capture_default_str();

  FitArgs fa;
  auto* cf = app.add_subcommand("fit", "Fit a model and decode states");
  cf->add_option("--data", fa.data, "Case-control CSV");
  cf->add_option("--track", fa.track, "Track CSV (models tsissa and hmm-raw)");
  cf->add_option("--raster", fa.rasters, "Habitat layer for tsissa as path or name=path (repeatable)");
  cf->add_option("--model", fa.model, "msissa, issa, hmm, hmm-raw or tsissa")
      ->check(CLI::IsMember({"msissa", "issa", "hmm", "cchmm", "hmm-raw", "tsissa"}))
      ->capture_default_str();
  cf->add_option("--N", fa.N, "Number of states")->check(CLI::Range(1, 10))->capture_default_str();
  cf->add_option("--starts", fa.starts, "Random starting values")->check(CLI::PositiveNumber)->capture_default_str();
  cf->add_option("--delta", fa.delta, "Initial distribution: uniform, stationary, estimated")->capture_default_str();
  cf->add_option("--step", fa.step, "Step family for hmm-raw and tsissa")->capture_default_str();
  cf->add_option("--turn", fa.turn, "Turn family for hmm-raw and tsissa")->capture_default_str();
  cf->add_option("--M", fa.M, "Controls per step for tsissa")->capture_default_str();
  cf->add_option("--threads", fa.threads, "Threads for the multi-start fits")->capture_default_str();
  cf->add_flag("--no-se", fa.no_se, "Skip standard errors");
  cf->add_flag("--strict", fa.strict, "Exit with code 3 when the optimizer does not converge");
  cf->add_option("--seed", fa.seed, "Random seed")->capture_default_str();
  cf->add_option("-o,--out", fa.out, "Fit JSON")->capture_default_str();
  cf->add_option("--states-out", fa.states_out, "Viterbi states CSV (default: <out>.states.csv)");

  StudyArgs sta;
  auto* cy = app.add_subcommand("study", "Run a simulation-study scenario");
  cy->add_option("--scenario", sta.scenario, "Scenario 1-4")->check(CLI::Range(1, 4))->capture_default_str();
  cy->add_option("--profile", sta.profile, "scaled or full")
      ->check(CLI::IsMember({"scaled", "full"}))
      ->capture_default_str();
  cy->add_option("--spec", sta.spec, "Study spec JSON (overrides --scenario and --profile)");
  cy->add_option("--runs", sta.runs, "Number of runs (default: profile)");
  cy->add_option("--M", sta.M, "Controls per step, comma-separated (default: profile)")->delimiter(',');
  cy->add_option("--starts", sta.starts, "Random starts per two-state fit (default: profile)");
  cy->add_option("--methods", sta.methods, "Comma-separated subset of issa, tsissa, msissa, hmm")->delimiter(',');
  cy->add_flag("--true-starts", sta.true_starts, "Start the two-state fits at the true values");
  cy->add_option("--scheme", sta.scheme, "importance or uniform")->check(CLI::IsMember({"importance", "uniform"}));
  cy->add_option("--range", sta.range, "Landscape range (default 10)");
  cy->add_option("--threads", sta.threads, "Worker threads")->capture_default_str();
  auto* study_seed = cy->add_option("--seed", sta.seed, "Random seed")->capture_default_str();
  cy->add_option("-o,--out", sta.out, "Results directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  set_warnings_enabled(!quiet);
  sta.quiet = quiet;
  try {
    if (*cl) return simulate_landscape(la);
    if (*ct) return simulate_track_cmd(ta);
    if (*cs) return sample_cmd(sa);
    if (*cf) return fit_cmd(fa);
    if (*cy) return study_cmd(sta, study_seed->count() > 0);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << '\n';
    return kValidation;
  }
  return kOk;
}
