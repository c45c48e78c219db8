#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path& dir() {
  static const fs::path d = [] {
    auto p = fs::temp_directory_path() / "msissa_cli_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

int run(const std::string& args) {
  const std::string cmd = std::string(MSISSA_CLI_PATH) + " -q " + args + " > " + (dir() / "stdout.txt").string() +
                          " 2> " + (dir() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string path(const std::string& name) { return (dir() / name).string(); }

// Landscape, track and case-control data shared by several tests.
void prepare() {
  static bool done = false;
  if (done) return;
  ASSERT_EQ(run("simulate-landscape --rows 120 --cols 120 --range 10 --seed 1 -o " + path("z.asc")), 0);
  ASSERT_EQ(run("simulate-track --scenario 1 --raster Z=" + path("z.asc") + " --T 400 --start 60,60 --seed 2 -o " +
                path("track.csv")),
            0);
  ASSERT_EQ(run("sample --track " + path("track.csv") + " --raster Z=" + path("z.asc") +
                " --scheme importance --M 10 --seed 3 -o " + path("cc.csv")),
            0);
  done = true;
}

}  // namespace

TEST(Cli, UnknownFlagIsAUsageError) {
  EXPECT_EQ(run("simulate-landscape --bogus 1 -o " + path("x.asc")), 2);
  EXPECT_EQ(run("no-such-command"), 2);
}

TEST(Cli, InvalidRangeIsAValidationError) {
  EXPECT_EQ(run("simulate-landscape --range 0 -o " + path("bad.asc")), 2);
  EXPECT_FALSE(fs::exists(path("bad.asc")));
}

TEST(Cli, TooShortTrackIsRejected) {
  prepare();
  EXPECT_EQ(run("simulate-track --scenario 1 --raster Z=" + path("z.asc") + " --T 2 --start 60,60 -o " +
                path("short.csv")),
            2);
}

TEST(Cli, MissingInputIsAnIoError) {
  EXPECT_EQ(run("fit --data " + path("nope.csv") + " --model issa -o " + path("nope.json")), 4);
}

TEST(Cli, MalformedCaseControlFile) {
  {
    std::ofstream out(path("broken.csv"));
    out << "burst,t,alt,case,x,y,l,alpha,C_1,Z_1,offset\n1,2,0,1,0,0,1,0,0,zero,0\n";
  }
  EXPECT_EQ(run("fit --data " + path("broken.csv") + " --model issa -o " + path("broken.json")), 2);
  EXPECT_NE(slurp(path("stderr.txt")).find("line 2"), std::string::npos) << slurp(path("stderr.txt"));
}

TEST(Cli, SameSeedSameBytes) {
  prepare();
  ASSERT_EQ(run("simulate-track --scenario 1 --raster Z=" + path("z.asc") + " --T 400 --start 60,60 --seed 2 -o " +
                path("track2.csv")),
            0);
  EXPECT_EQ(slurp(path("track.csv")), slurp(path("track2.csv")));
  ASSERT_EQ(run("sample --track " + path("track.csv") + " --raster Z=" + path("z.asc") +
                " --scheme importance --M 10 --seed 3 -o " + path("cc2.csv")),
            0);
  EXPECT_EQ(slurp(path("cc.csv")), slurp(path("cc2.csv")));
  ASSERT_EQ(run("sample --track " + path("track.csv") + " --raster Z=" + path("z.asc") +
                " --scheme importance --M 10 --seed 4 -o " + path("cc3.csv")),
            0);
  EXPECT_NE(slurp(path("cc.csv")), slurp(path("cc3.csv")));
}

TEST(Cli, IssaEqualsSingleStateMsIssa) {
  prepare();
  ASSERT_EQ(run("fit --data " + path("cc.csv") + " --model issa -o " + path("issa.json")), 0);
  ASSERT_EQ(run("fit --data " + path("cc.csv") + " --model msissa --N 1 -o " + path("ms1.json")), 0);
  const auto a = nlohmann::json::parse(slurp(path("issa.json")));
  const auto b = nlohmann::json::parse(slurp(path("ms1.json")));
  EXPECT_DOUBLE_EQ(a["loglik"].get<double>(), b["loglik"].get<double>());
  EXPECT_EQ(a["states"][0]["theta"], b["states"][0]["theta"]);
  EXPECT_EQ(a["states"][0]["beta"], b["states"][0]["beta"]);
  EXPECT_TRUE(a["converged"].get<bool>());
}

TEST(Cli, TwoStateFitWritesDecodedStates) {
  prepare();
  ASSERT_EQ(run("fit --data " + path("cc.csv") + " --model msissa --N 2 --starts 3 --seed 5 -o " + path("ms2.json") +
                " --states-out " + path("ms2_states.csv")),
            0);
  const auto j = nlohmann::json::parse(slurp(path("ms2.json")));
  EXPECT_EQ(j["N"], 2);
  EXPECT_EQ(j["ll_per_start"].size(), 3u);
  std::ifstream in(path("ms2_states.csv"));
  std::string line;
  std::size_t n = 0;
  std::getline(in, line);
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 398u);
}

TEST(Cli, SmallStudyWritesTables) {
  const auto out = dir() / "study";
  ASSERT_EQ(run("study --scenario 3 --runs 2 --M 5 --starts 2 --methods issa,msissa --seed 6 -o " + out.string()),
            0);
  for (const char* f : {"scen3_table2.csv", "scen3_table3.csv", "scen3_table4.csv", "scen3_tableS3.csv",
                        "scen3_tableS4.csv", "scen3_runs.csv", "scen3_metrics.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_EQ(run("study --scenario 9 -o " + out.string()), 2);
}
