#include "msissa/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>

#include "msissa/error.hpp"

namespace msissa {
namespace {

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json vector_or_null(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number_or_null(x));
  return a;
}

Json matrix_rows(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const Json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw SchemaError(std::string(what) + " must be a non-empty array of rows");
  const auto n = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
      throw SchemaError(std::string(what) + " must be square");
    for (Eigen::Index k = 0; k < n; ++k) m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

Json named(const std::vector<std::string>& names, const std::vector<double>& values) {
  Json o = Json::object();
  for (std::size_t k = 0; k < names.size() && k < values.size(); ++k) o[names[k]] = number_or_null(values[k]);
  return o;
}

std::vector<double> unnamed(const Json& o, const std::vector<std::string>& names, const char* what) {
  std::vector<double> v;
  if (o.is_array()) {
    for (const auto& x : o) v.push_back(x.get<double>());
  } else {
    for (const auto& n : names) {
      if (!o.contains(n)) throw SchemaError(std::string(what) + " is missing entry '" + n + "'");
      v.push_back(o.at(n).get<double>());
    }
  }
  if (v.size() != names.size())
    throw SchemaError(std::string(what) + " has " + std::to_string(v.size()) + " entries, expected " +
                      std::to_string(names.size()));
  return v;
}

Json diagnostics_to_json(const Diagnostics& d) {
  return Json{{"best_ll_fraction", d.best_ll_fraction},
              {"single_start_max", d.single_start_max},
              {"near_empty_state", d.near_empty_state},
              {"boundary_parameter", d.boundary_parameter},
              {"low_step_variance", d.low_step_variance},
              {"all_low_persistence", d.all_low_persistence},
              {"hessian_not_pd", d.hessian_not_pd},
              {"differing_best_estimates", d.differing_best_estimates},
              {"occupancy", d.occupancy},
              {"any", d.any()}};
}

}  // namespace

std::string format_number(double v, int digits) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  std::string s = buf;
  if (s == "-0") s = "0";
  return s;
}

Json step_to_json(const StepDistribution& d) {
  return std::visit(
      [](const auto& s) -> Json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ExponentialStep>) return {{"family", "exponential"}, {"rate", s.rate}};
        else if constexpr (std::is_same_v<T, GammaStep>)
          return {{"family", "gamma"}, {"shape", s.shape}, {"rate", s.rate}};
        else return {{"family", "lognormal"}, {"mu", s.mu}, {"sigma2", s.sigma2}};
      },
      d);
}

StepDistribution step_from_json(const Json& j) {
  try {
    const auto f = step_family_from_string(j.at("family").get<std::string>());
    StepDistribution d;
    switch (f) {
      case StepFamily::Exponential: d = ExponentialStep{j.at("rate").get<double>()}; break;
      case StepFamily::Gamma: d = GammaStep{j.at("shape").get<double>(), j.at("rate").get<double>()}; break;
      case StepFamily::LogNormal: d = LogNormalStep{j.at("mu").get<double>(), j.at("sigma2").get<double>()}; break;
    }
    validate(d);
    return d;
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("malformed step distribution: ") + e.what());
  }
}

Json turn_to_json(const TurnDistribution& d) {
  if (const auto* vm = std::get_if<VonMisesTurn>(&d)) return {{"family", "vonmises"}, {"kappa", vm->kappa}};
  return {{"family", "uniform"}};
}

TurnDistribution turn_from_json(const Json& j) {
  try {
    const auto f = turn_family_from_string(j.at("family").get<std::string>());
    TurnDistribution d = UniformTurn{};
    if (f == TurnFamily::VonMises) d = VonMisesTurn{j.at("kappa").get<double>()};
    validate(d);
    return d;
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("malformed turn distribution: ") + e.what());
  }
}

Json kernel_spec_to_json(const MovementKernelSpec& k) {
  return {{"step", to_string(k.step)}, {"turn", to_string(k.turn)}};
}

MovementKernelSpec kernel_spec_from_json(const Json& j) {
  try {
    return {step_family_from_string(j.at("step").get<std::string>()),
            turn_family_from_string(j.at("turn").get<std::string>())};
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("malformed kernel record: ") + e.what());
  }
}

Json scheme_to_json(const SamplingScheme& s) {
  Json j{{"kind", to_string(s.kind)}};
  switch (s.kind) {
    case SchemeKind::Importance:
      j["step_proposal"] = s.step_proposal ? step_to_json(*s.step_proposal) : Json(nullptr);
      j["turn_proposal"] = s.turn_proposal ? turn_to_json(*s.turn_proposal) : Json(nullptr);
      break;
    case SchemeKind::UniformSteps: j["max_step"] = s.max_step; break;
    case SchemeKind::Grid:
      j["grid_resolution"] = s.grid_resolution;
      j["grid_radius"] = s.grid_radius;
      break;
  }
  return j;
}

SamplingScheme scheme_from_json(const Json& j) {
  try {
    switch (scheme_kind_from_string(j.at("kind").get<std::string>())) {
      case SchemeKind::Importance: {
        std::optional<VonMisesTurn> turn;
        if (j.contains("turn_proposal") && !j["turn_proposal"].is_null()) {
          const auto t = turn_from_json(j["turn_proposal"]);
          if (const auto* vm = std::get_if<VonMisesTurn>(&t)) turn = *vm;
        }
        return SamplingScheme::importance(step_from_json(j.at("step_proposal")), turn);
      }
      case SchemeKind::UniformSteps: return SamplingScheme::uniform_steps(j.at("max_step").get<double>());
      case SchemeKind::Grid:
        return SamplingScheme::grid(j.at("grid_resolution").get<double>(), j.at("grid_radius").get<double>());
    }
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("malformed sampling scheme: ") + e.what());
  }
  throw SchemaError("malformed sampling scheme");
}

Json params_to_json(const MsParams& p, const MovementKernelSpec& kernel, const SamplingScheme& scheme,
                    const std::vector<std::string>& habitat_names) {
  Json j;
  j["N"] = p.n_states();
  Json g = Json::array();
  for (Eigen::Index i = 0; i < p.gamma.rows(); ++i)
    for (Eigen::Index k = 0; k < p.gamma.cols(); ++k) g.push_back(p.gamma(i, k));
  j["Gamma"] = g;
  j["delta_mode"] = to_string(p.delta_mode);
  const Eigen::VectorXd d = p.initial();
  j["delta"] = std::vector<double>(d.data(), d.data() + d.size());
  j["kernel"] = kernel_spec_to_json(kernel);
  j["scheme"] = scheme_to_json(scheme);
  const auto cov = kernel.covariate_names();
  Json states = Json::array();
  for (const auto& s : p.states) {
    Json st;
    st["theta"] = named(cov, s.theta);
    st["beta"] = named(habitat_names, s.beta);
    try {
      const auto nk = coef_to_natural(kernel, scheme, s.theta);
      st["natural"] = named(kernel.natural_names(), natural_values(nk));
      st["step_mean"] = step_mean(nk.step);
      st["step_variance"] = step_variance(nk.step);
    } catch (const ValidationError&) {
      st["natural"] = nullptr;
    }
    states.push_back(st);
  }
  j["states"] = states;
  return j;
}

MsParams params_from_json(const Json& j, const MovementKernelSpec& kernel,
                          const std::vector<std::string>& habitat_names) {
  try {
    MsParams p;
    const int n = j.at("N").get<int>();
    if (n < 1) throw SchemaError("N must be at least 1");
    const auto g = j.at("Gamma");
    if (!g.is_array() || g.size() != static_cast<std::size_t>(n * n))
      throw SchemaError("Gamma must hold N*N entries in row-major order");
    p.gamma.resize(n, n);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) p.gamma(i, k) = g.at(static_cast<std::size_t>(i * n + k)).get<double>();
    p.delta_mode = delta_mode_from_string(j.value("delta_mode", std::string("uniform")));
    p.delta = Eigen::VectorXd::Constant(n, 1.0 / n);
    if (j.contains("delta") && p.delta_mode == DeltaMode::Estimated) {
      const auto dv = j["delta"].get<std::vector<double>>();
      if (dv.size() != static_cast<std::size_t>(n)) throw SchemaError("delta must have N entries");
      p.delta = Eigen::Map<const Eigen::VectorXd>(dv.data(), n);
    }
    const auto& st = j.at("states");
    if (st.size() != static_cast<std::size_t>(n)) throw SchemaError("states must have N entries");
    for (const auto& s : st)
      p.states.push_back({unnamed(s.at("theta"), kernel.covariate_names(), "theta"),
                          unnamed(s.at("beta"), habitat_names, "beta")});
    p.validate(kernel.n_coef(), habitat_names.size());
    return p;
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("malformed parameter record: ") + e.what());
  }
}

Json fit_to_json(const FitResult& f) {
  Json j = params_to_json(f.params, f.kernel, f.scheme, f.habitat_names);
  j["model"] = to_string(f.kind);
  j["beta_fixed_zero"] = f.beta_fixed_zero;
  j["loglik"] = f.loglik;
  j["aic"] = f.aic;
  j["bic"] = f.bic;
  j["n_free"] = f.n_free;
  j["n_obs"] = f.n_obs;
  j["converged"] = f.converged;
  j["iterations"] = f.iterations;
  j["gradient_norm"] = f.grad_norm;
  j["start_index"] = f.start_index;
  j["ll_per_start"] = vector_or_null(f.ll_per_start);
  j["se_available"] = f.se_available;
  const auto cov = f.kernel.covariate_names();
  const auto nat = f.kernel.natural_names();
  Json se = Json::array(), pv = Json::array();
  for (const auto& inf : f.inference) {
    if (!f.se_available) {
      se.push_back(nullptr);
      pv.push_back(nullptr);
      continue;
    }
    se.push_back({{"theta", named(cov, inf.se_theta)},
                  {"beta", named(f.habitat_names, inf.se_beta)},
                  {"natural", named(nat, inf.se_natural)}});
    pv.push_back({{"theta", named(cov, inf.p_theta)}, {"beta", named(f.habitat_names, inf.p_beta)}});
  }
  j["se"] = se;
  j["p_values"] = pv;
  j["diagnostics"] = diagnostics_to_json(f.diagnostics);
  return j;
}

Json movement_fit_to_json(const MovementHmmFit& f) {
  Json j;
  j["model"] = to_string(ModelKind::MovementHMM);
  j["N"] = f.params.n_states();
  Json g = Json::array();
  for (Eigen::Index i = 0; i < f.params.gamma.rows(); ++i)
    for (Eigen::Index k = 0; k < f.params.gamma.cols(); ++k) g.push_back(f.params.gamma(i, k));
  j["Gamma"] = g;
  j["delta_mode"] = to_string(f.params.delta_mode);
  j["kernel"] = kernel_spec_to_json(f.kernel);
  Json states = Json::array();
  for (const auto& k : f.params.states) states.push_back({{"step", step_to_json(k.step)}, {"turn", turn_to_json(k.turn)}});
  j["states"] = states;
  j["loglik"] = f.loglik;
  j["aic"] = f.aic;
  j["bic"] = f.bic;
  j["n_free"] = f.n_free;
  j["n_obs"] = f.n_obs;
  j["converged"] = f.converged;
  j["start_index"] = f.start_index;
  j["ll_per_start"] = vector_or_null(f.ll_per_start);
  return j;
}

Json tsissa_to_json(const TsIssaResult& r) {
  Json j;
  j["model"] = to_string(ModelKind::TSiSSA);
  j["hmm"] = movement_fit_to_json(r.hmm);
  j["state_counts"] = r.state_counts;
  Json fits = Json::array();
  for (const auto& f : r.state_fits) fits.push_back(f ? fit_to_json(*f) : Json(nullptr));
  j["state_fits"] = fits;
  return j;
}

Json simulation_model_to_json(const SimulationModel& m) {
  Json j;
  j["Gamma"] = matrix_rows(m.chain.gamma);
  if (m.chain.stationary) j["stationary"] = true;
  else j["delta"] = std::vector<double>(m.chain.delta.data(), m.chain.delta.data() + m.chain.delta.size());
  Json states = Json::array();
  for (const auto& s : m.states)
    states.push_back({{"step", step_to_json(s.kernel.step)}, {"turn", turn_to_json(s.kernel.turn)}, {"beta", s.beta}});
  j["states"] = states;
  return j;
}

SimulationModel simulation_model_from_json(const Json& j) {
  try {
    SimulationModel m;
    for (const auto& s : j.at("states"))
      m.states.push_back({{step_from_json(s.at("step")), turn_from_json(s.at("turn"))},
                          s.at("beta").get<std::vector<double>>()});
    const auto n = static_cast<int>(m.states.size());
    if (n < 1) throw SchemaError("the model needs at least one state");
    m.chain.gamma = j.contains("Gamma") ? matrix_from(j["Gamma"], "Gamma") : Eigen::MatrixXd::Ones(1, 1);
    m.chain.stationary = j.value("stationary", false);
    if (j.contains("delta")) {
      const auto d = j["delta"].get<std::vector<double>>();
      m.chain.delta = Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
    } else if (!m.chain.stationary) {
      m.chain.delta = Eigen::VectorXd::Constant(n, 1.0 / n);
    }
    if (m.chain.n_states() != n) throw SchemaError("Gamma size does not match the number of states");
    m.chain.validate();
    return m;
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("malformed simulation model: ") + e.what());
  }
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw SchemaError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << std::setw(2) << j << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace msissa
