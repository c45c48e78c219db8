#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msissa/kernel.hpp"
#include "msissa/models.hpp"
#include "msissa/msclr.hpp"
#include "msissa/simulate.hpp"

namespace msissa {

using Json = nlohmann::json;

Json step_to_json(const StepDistribution& d);
StepDistribution step_from_json(const Json& j);
Json turn_to_json(const TurnDistribution& d);
TurnDistribution turn_from_json(const Json& j);

Json kernel_spec_to_json(const MovementKernelSpec& k);
MovementKernelSpec kernel_spec_from_json(const Json& j);
Json scheme_to_json(const SamplingScheme& s);
SamplingScheme scheme_from_json(const Json& j);

/// Parameters: N, Gamma (row-major), delta_mode, delta, per-state theta and
/// beta keyed by covariate name, plus kernel, scheme and natural-scale values.
Json params_to_json(const MsParams& p, const MovementKernelSpec& kernel, const SamplingScheme& scheme,
                    const std::vector<std::string>& habitat_names);
MsParams params_from_json(const Json& j, const MovementKernelSpec& kernel,
                          const std::vector<std::string>& habitat_names);

/// Parameters plus loglik, aic, bic, se, p_values, converged, diagnostics, ll_per_start.
Json fit_to_json(const FitResult& f);
Json movement_fit_to_json(const MovementHmmFit& f);
Json tsissa_to_json(const TsIssaResult& r);

/// Natural-scale simulation model: {"Gamma", "delta" | "stationary", "states": [{step, turn, beta}]}.
struct SimulationModel {
  MarkovChainSpec chain;
  std::vector<StateModel> states;
};
Json simulation_model_to_json(const SimulationModel& m);
SimulationModel simulation_model_from_json(const Json& j);

Json read_json(const std::filesystem::path& path);
void write_json(const Json& j, const std::filesystem::path& path);

/// Shortest round-tripping decimal rendering with at most `digits` significant digits.
std::string format_number(double v, int digits = 6);

}  // namespace msissa
