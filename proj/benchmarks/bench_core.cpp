#include <algorithm>
#include <map>

#include <benchmark/benchmark.h>

#include "msissa/landscape.hpp"
#include "msissa/models.hpp"
#include "msissa/msclr.hpp"
#include "msissa/sampling.hpp"
#include "msissa/simulate.hpp"

using namespace msissa;

namespace {

struct Fixture {
  Habitat habitat;
  CaseControlData data;
  MsParams params;
};

const Fixture& fixture(std::size_t M) {
  static std::map<std::size_t, Fixture> cache;
  auto it = cache.find(M);
  if (it != cache.end()) return it->second;
  Rng land(1);
  Habitat h("Z", simulate_grf({1.0, 10.0, 200, 200, 1.0}, land));
  const auto chain = MarkovChainSpec::persistent(2, 0.9);
  const std::vector<StateModel> states{{{GammaStep{1.2, 1.25}, VonMisesTurn{0.3}}, {0.0}},
                                       {{GammaStep{2.5, 0.29}, VonMisesTurn{1.0}}, {2.0}}};
  Rng rng(2);
  const auto sim = simulate_track(chain, states, h, 1000, {100, 100}, rng);
  const auto steps = observed_steps(sim.track);
  const auto prop = fit_proposal(steps, {StepFamily::Gamma, TurnFamily::Uniform});
  auto data = build_choice_sets(steps, h, {StepFamily::Gamma, TurnFamily::VonMises},
                                SamplingScheme::importance(prop.step), M, 3);
  auto params = params_from_natural(data, chain.gamma, {states[0].kernel, states[1].kernel},
                                    {states[0].beta, states[1].beta});
  return cache.emplace(M, Fixture{std::move(h), std::move(data), std::move(params)}).first->second;
}

}  // namespace

static void BM_ForwardLoglik(benchmark::State& state) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward_loglik(f.params, f.data));
}
BENCHMARK(BM_ForwardLoglik)->Arg(20)->Arg(100);

static void BM_Gradient(benchmark::State& state) {
  const auto& f = fixture(20);
  const Parameterization par(f.data.kernel, f.data.scheme, 2, 1, DeltaMode::Uniform);
  const MsObjective obj(f.data, par);
  const auto w = par.to_working(f.params);
  for (auto _ : state) benchmark::DoNotOptimize(obj.gradient(w));
}
BENCHMARK(BM_Gradient)->Unit(benchmark::kMillisecond);

static void BM_Grf(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(simulate_grf({1.0, 10.0, n, n, 1.0}, rng));
}
BENCHMARK(BM_Grf)->Arg(100)->Arg(200)->Unit(benchmark::kMillisecond);

static void BM_StepSampler(benchmark::State& state) {
  const auto& f = fixture(20);
  const StateModel m{{GammaStep{2.5, 0.29}, VonMisesTurn{1.0}}, {2.0}};
  const double bound = std::max(0.0, f.habitat.max_linear(m.beta));
  Rng rng(5);
  for (auto _ : state)
    benchmark::DoNotOptimize(sample_step_endpoint({99, 100}, {100, 100}, m, f.habitat, bound, rng));
}
BENCHMARK(BM_StepSampler);
BENCHMARK_MAIN();
