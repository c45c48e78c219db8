#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "msissa/error.hpp"
#include "msissa/serialize.hpp"
#include "support/oracles.hpp"

using namespace msissa;
namespace fs = std::filesystem;

TEST(FormatNumber, SignificantDigits) {
  EXPECT_EQ(format_number(3.14159265), "3.14159");
  EXPECT_EQ(format_number(0.0), "0");
  EXPECT_EQ(format_number(-0.0), "0");
  EXPECT_EQ(format_number(1234567.0), "1.23457e+06");
  EXPECT_EQ(format_number(2.5, 3), "2.5");
  EXPECT_EQ(format_number(std::numeric_limits<double>::quiet_NaN()), "NA");
  EXPECT_EQ(format_number(-std::numeric_limits<double>::infinity()), "-Inf");
}

TEST(Json, DistributionsRoundTrip) {
  for (const StepDistribution& d : {StepDistribution{ExponentialStep{0.7}}, StepDistribution{GammaStep{2.5, 0.29}},
                                    StepDistribution{LogNormalStep{-0.3, 1.2}}}) {
    const auto back = step_from_json(step_to_json(d));
    EXPECT_EQ(natural_values({back, UniformTurn{}}), natural_values({d, UniformTurn{}}));
  }
  const auto t = turn_from_json(turn_to_json(VonMisesTurn{0.4}));
  EXPECT_EQ(std::get<VonMisesTurn>(t).kappa, 0.4);
  EXPECT_TRUE(std::holds_alternative<UniformTurn>(turn_from_json(turn_to_json(UniformTurn{}))));
  EXPECT_THROW(step_from_json(Json{{"family", "weibull"}, {"shape", 1.0}}), Error);
  EXPECT_THROW(step_from_json(Json{{"family", "gamma"}, {"shape", 1.0}}), SchemaError);
}

TEST(Json, SchemesRoundTrip) {
  const MovementKernelSpec k;
  EXPECT_THROW(natural_to_coef(k, SamplingScheme::importance(ExponentialStep{0.2}), {GammaStep{1.0, 1.0}, VonMisesTurn{1.0}}),
               ValidationError);
  for (const auto& s : {SamplingScheme::importance(GammaStep{2.0, 0.5}, VonMisesTurn{0.3}),
                        SamplingScheme::importance(GammaStep{0.8, 0.2}), SamplingScheme::uniform_steps(12.5),
                        SamplingScheme::grid(0.5, 8.0)}) {
    const auto back = scheme_from_json(scheme_to_json(s));
    EXPECT_EQ(scheme_to_json(back), scheme_to_json(s));
    // Same interpretation of the coefficients.
    const NaturalKernel nk{GammaStep{1.7, 0.6}, VonMisesTurn{0.9}};
    EXPECT_EQ(natural_to_coef(k, back, nk), natural_to_coef(k, s, nk));
  }
}

TEST(Json, ParametersRoundTrip) {
  const auto d = oracle::random_data(10, 3, 2, 1, 1);
  for (auto mode : {DeltaMode::Uniform, DeltaMode::Estimated}) {
    const auto p = oracle::random_params(d, 3, mode, 2);
    const auto j = params_to_json(p, d.kernel, d.scheme, d.habitat_names);
    const auto back = params_from_json(Json::parse(j.dump()), d.kernel, d.habitat_names);
    EXPECT_EQ(back.delta_mode, mode);
    EXPECT_EQ((back.gamma - p.gamma).cwiseAbs().maxCoeff(), 0.0);
    for (int i = 0; i < 3; ++i) EXPECT_EQ((back.coef(i) - p.coef(i)).cwiseAbs().maxCoeff(), 0.0);
    if (mode == DeltaMode::Estimated) EXPECT_EQ((back.delta - p.delta).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Json, ParameterSchemaErrors) {
  const auto d = oracle::random_data(10, 3, 1, 1, 3);
  auto j = params_to_json(oracle::random_params(d, 2, DeltaMode::Uniform, 4), d.kernel, d.scheme, d.habitat_names);
  auto bad = j;
  bad["Gamma"] = Json::array({1.0, 0.0, 0.0});
  EXPECT_THROW(params_from_json(bad, d.kernel, d.habitat_names), SchemaError);
  bad = j;
  bad.erase("states");
  EXPECT_THROW(params_from_json(bad, d.kernel, d.habitat_names), SchemaError);
  bad = j;
  bad["states"][0]["beta"].erase(d.habitat_names[0]);
  EXPECT_THROW(params_from_json(bad, d.kernel, d.habitat_names), SchemaError);
}

TEST(Json, SimulationModelRoundTrip) {
  SimulationModel m;
  m.chain = MarkovChainSpec::persistent(2, 0.9);
  m.states = {{{GammaStep{1.2, 1.25}, VonMisesTurn{0.3}}, {0.0}}, {{GammaStep{2.5, 0.29}, VonMisesTurn{1.0}}, {2.0}}};
  const auto back = simulation_model_from_json(Json::parse(simulation_model_to_json(m).dump()));
  EXPECT_EQ((back.chain.gamma - m.chain.gamma).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((back.chain.initial() - m.chain.initial()).cwiseAbs().maxCoeff(), 0.0);
  ASSERT_EQ(back.states.size(), 2u);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(natural_values(back.states[i].kernel), natural_values(m.states[i].kernel));
    EXPECT_EQ(back.states[i].beta, m.states[i].beta);
  }
  EXPECT_THROW(simulation_model_from_json(Json{{"states", Json::array()}}), SchemaError);
  Json wrong = simulation_model_to_json(m);
  wrong["Gamma"] = Json::array({Json::array({1.0})});
  EXPECT_THROW(simulation_model_from_json(wrong), SchemaError);
}

TEST(Json, FileErrors) {
  const auto dir = fs::temp_directory_path() / "msissa_tests";
  fs::create_directories(dir);
  EXPECT_THROW(read_json(dir / "missing.json"), IoError);
  {
    std::ofstream out(dir / "broken.json");
    out << "{ \"N\": ";
  }
  EXPECT_THROW(read_json(dir / "broken.json"), SchemaError);
  write_json(Json{{"a", 1}}, dir / "ok.json");
  EXPECT_EQ(read_json(dir / "ok.json")["a"], 1);
}
