#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "msissa/error.hpp"
#include "msissa/study.hpp"

using namespace msissa;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ScenarioSpec small_spec() {
  auto s = ScenarioSpec::preset(1);
  s.n_runs = 3;
  s.T = 250;
  s.M = {5};
  s.n_starts = 2;
  s.methods = {"issa", "msissa", "hmm"};
  return s;
}

MethodRun synthetic(const std::string& method, std::vector<double> est, std::vector<double> p, double mis) {
  MethodRun m;
  m.method = method;
  m.M = 20;
  m.ok = true;
  m.estimates = std::move(est);
  m.p_beta = std::move(p);
  m.misclassification = mis;
  m.has_ic = true;
  return m;
}

}  // namespace

TEST(Align, BestRelabelling) {
  const std::vector<int> truth{0, 0, 1, 1, 1, 0};
  const std::vector<int> swapped{1, 1, 0, 0, 0, 1};
  auto [mis, perm] = align_states(truth, swapped, 2, 2);
  EXPECT_EQ(mis, 0.0);
  EXPECT_EQ(perm, (std::vector<int>{1, 0}));
  const std::vector<int> one_off{0, 0, 1, 1, 0, 0};
  EXPECT_NEAR(align_states(truth, one_off, 2, 2).first, 100.0 / 6.0, 1e-12);
  // A single fitted state maps onto the most common true state.
  EXPECT_NEAR(align_states(truth, std::vector<int>(6, 0), 1, 2).first, 50.0, 1e-12);
  EXPECT_THROW(align_states(truth, {0, 1}, 2, 2), ValidationError);
}

TEST(Presets, ScenarioValues) {
  const auto s1 = ScenarioSpec::preset(1);
  EXPECT_EQ(s1.n_runs, 25u);
  EXPECT_EQ(s1.M, (std::vector<std::size_t>{20}));
  EXPECT_EQ(s1.n_starts, 10u);
  EXPECT_EQ(reported_parameters(s1),
            (std::vector<std::string>{"beta_1", "beta_2", "shape_1", "shape_2", "rate_1", "rate_2", "kappa_1", "kappa_2"}));
  EXPECT_EQ(reported_truth(s1), (std::vector<double>{0, 2, 1.2, 2.5, 1.25, 0.29, 0.3, 1}));
  EXPECT_EQ(reported_truth(ScenarioSpec::preset(2)), (std::vector<double>{-2, 2, 2.5, 2.5, 0.29, 0.29, 1, 1}));
  EXPECT_EQ(reported_truth(ScenarioSpec::preset(3))[1], 0.0);
  const auto s4 = ScenarioSpec::preset(4);
  EXPECT_EQ(s4.n_true_states(), 1);
  EXPECT_DOUBLE_EQ(s1.chain.gamma(0, 0), 0.9);
  EXPECT_EQ(s1.landscape.n_rows, 200);
  EXPECT_DOUBLE_EQ(s1.landscape.range, 10.0);
  const auto full = ScenarioSpec::preset(1, true);
  EXPECT_EQ(full.n_runs, 100u);
  EXPECT_EQ(full.M, (std::vector<std::size_t>{20, 100, 500}));
  EXPECT_EQ(full.n_starts, 50u);
  EXPECT_THROW(ScenarioSpec::preset(5), ValidationError);
}

TEST(Presets, JsonOverrides) {
  const auto s = scenario_from_json(Json{{"scenario", 2}, {"n_runs", 4}, {"M", {10, 30}}, {"seed", 7}});
  EXPECT_EQ(s.scenario, 2);
  EXPECT_EQ(s.n_runs, 4u);
  EXPECT_EQ(s.M, (std::vector<std::size_t>{10, 30}));
  EXPECT_EQ(s.seed, 7u);
  const auto back = scenario_from_json(scenario_to_json(s));
  EXPECT_EQ(scenario_to_json(back), scenario_to_json(s));
  EXPECT_THROW(scenario_from_json(Json{{"scenario", 1}, {"methods", {"glm"}}}), Error);
}

TEST(Metrics, SyntheticRecords) {
  auto spec = ScenarioSpec::preset(1);
  spec.methods = {"msissa"};
  const auto truth = reported_truth(spec);
  std::vector<RunRecord> runs;
  const double shifts[] = {0.1, -0.3, 0.5, 0.1};
  const double pv1[] = {0.5, 0.01, std::nan(""), 0.2};
  for (int r = 0; r < 4; ++r) {
    std::vector<double> est = truth;
    for (auto& e : est) e += shifts[r];
    RunRecord rec;
    rec.run = r;
    rec.ok = true;
    rec.methods.push_back(synthetic("msissa", est, {pv1[r], 0.001}, 2.0 + r));
    if (r == 1) rec.methods.back().diagnostics.near_empty_state = true;
    runs.push_back(rec);
  }
  const auto m = compute_metrics(spec, runs);
  const auto* mm = m.find("msissa", 20);
  ASSERT_NE(mm, nullptr);
  EXPECT_EQ(mm->n_completed, 4u);
  for (std::size_t p = 0; p < truth.size(); ++p) {
    EXPECT_NEAR(mm->bias[p], 0.1, 1e-12);
    EXPECT_NEAR(mm->rmse[p], std::sqrt((0.01 + 0.09 + 0.25 + 0.01) / 4), 1e-12);
    EXPECT_GE(mm->rmse[p] * mm->rmse[p], mm->bias[p] * mm->bias[p]);
  }
  EXPECT_NEAR(mm->misclass_mean, 3.5, 1e-12);
  EXPECT_NEAR(mm->misclass_sd, std::sqrt(5.0 / 3.0), 1e-12);
  // The missing p-value is left out of the denominator.
  EXPECT_EQ(mm->n_significance[0], 3u);
  EXPECT_NEAR(mm->pct_significant[0], 100.0 / 3.0, 1e-12);
  EXPECT_NEAR(mm->pct_significant[1], 100.0, 1e-12);
  EXPECT_NEAR(mm->pct_near_empty, 25.0, 1e-12);
  EXPECT_NEAR(mm->pct_any_flag, 25.0, 1e-12);
  EXPECT_EQ(m.find("issa", 20), nullptr);
}

TEST(Metrics, SelectionCountsCompleteRunsOnly) {
  auto spec = ScenarioSpec::preset(1);
  spec.methods = {"issa", "msissa"};
  const auto truth = reported_truth(spec);
  std::vector<RunRecord> runs(3);
  for (int r = 0; r < 3; ++r) {
    runs[r].ok = true;
    auto a = synthetic("issa", truth, {0.5, 0.5}, std::nan(""));
    auto b = synthetic("msissa", truth, {0.5, 0.5}, 1.0);
    a.aic = 100.0;
    a.bic = 100.0;
    b.aic = r == 0 ? 120.0 : 90.0;
    b.bic = 95.0;
    runs[r].methods = {a, b};
  }
  runs[2].methods[1].ok = false;
  const auto m = compute_metrics(spec, runs);
  ASSERT_EQ(m.selection.size(), 1u);
  const auto& sel = m.selection[0];
  EXPECT_EQ(sel.n_runs, 2u);
  EXPECT_EQ(sel.candidates, (std::vector<std::string>{"issa", "msissa"}));
  EXPECT_NEAR(sel.pct_aic[0], 50.0, 1e-12);
  EXPECT_NEAR(sel.pct_bic[1], 100.0, 1e-12);
}

TEST(Degeneracy, FlagsFollowDiagnostics) {
  FitResult a, b;
  b.diagnostics.near_empty_state = true;
  b.diagnostics.hessian_not_pd = true;
  const auto f = degeneracy_report({a, b});
  ASSERT_EQ(f.size(), 2u);
  EXPECT_FALSE(f[0].any());
  EXPECT_TRUE(f[1].near_empty_state);
  EXPECT_TRUE(f[1].any());
}

TEST(Study, DeterministicAcrossThreadsAndReruns) {
  auto spec = small_spec();
  const auto base = fs::temp_directory_path() / "msissa_tests" / "study";
  fs::remove_all(base);
  std::vector<fs::path> dirs;
  for (unsigned threads : {1u, 3u, 1u}) {
    spec.threads = threads;
    const auto res = run_study(spec);
    const auto dir = base / std::to_string(dirs.size());
    report_tables(res, dir);
    dirs.push_back(dir);
  }
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dirs[0])) {
    ++files;
    const auto name = e.path().filename();
    for (std::size_t k = 1; k < dirs.size(); ++k)
      EXPECT_EQ(slurp(e.path()), slurp(dirs[k] / name)) << name << " differs in output " << k;
  }
  EXPECT_GE(files, 8u);
}

TEST(Study, TablesAgreeWithMetrics) {
  auto spec = small_spec();
  spec.n_runs = 2;
  const auto res = run_study(spec);
  ASSERT_EQ(res.runs.size(), 2u);
  const auto dir = fs::temp_directory_path() / "msissa_tests" / "study_tables";
  fs::remove_all(dir);
  report_tables(res, dir);
  const Json j = read_json(dir / "scen1_metrics.json");
  EXPECT_EQ(j.at("n_runs"), 2);
  const auto* mm = res.metrics.find("msissa", 5);
  ASSERT_NE(mm, nullptr);
  // Tables carry 6 significant digits of the metrics.
  std::ifstream bias(dir / "scen1_tableS3.csv");
  std::string header, line, cell;
  std::getline(bias, header);
  std::vector<std::string> cols;
  for (std::stringstream hs(header); std::getline(hs, cell, ',');) cols.push_back(cell);
  bool seen = false;
  while (std::getline(bias, line)) {
    if (line.rfind("msissa,5,", 0) != 0) continue;
    seen = true;
    std::vector<std::string> cells;
    for (std::stringstream ss(line); std::getline(ss, cell, ',');) cells.push_back(cell);
    ASSERT_EQ(cells.size(), cols.size());
    for (std::size_t p = 0; p < mm->bias.size(); ++p) {
      const auto at = std::find(cols.begin(), cols.end(), res.metrics.parameters[p]);
      ASSERT_NE(at, cols.end()) << res.metrics.parameters[p];
      EXPECT_EQ(cells[static_cast<std::size_t>(at - cols.begin())], format_number(mm->bias[p]));
    }
  }
  EXPECT_TRUE(seen) << header;
}
