#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "decoc/csv.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("decoc_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DECOC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace

TEST(Cli, RunIsByteIdenticalForTheSameSeed) {
  const auto a = scratch("run_a"), b = scratch("run_b");
  const std::string common = "run --scenario overtake --iterations 50 --depth 6 --epochs 4 --seed 3";
  ASSERT_EQ(run_cli(common + " --out " + a.string()), 0);
  ASSERT_EQ(run_cli(common + " --out " + b.string()), 0);
  EXPECT_EQ(slurp(a / "trajectory.csv"), slurp(b / "trajectory.csv"));
  EXPECT_EQ(slurp(a / "plans.txt"), slurp(b / "plans.txt"));
  EXPECT_EQ(first_line(a / "trajectory.csv"), decoc::kTrajectoryHeader);
}

TEST(Cli, SweepIsByteIdenticalAcrossJobCounts) {
  const auto a = scratch("sweep_a"), b = scratch("sweep_b");
  const std::string common =
      "sweep --scenario double_merge --iteration-grid 10,20 --depths 3 --runs 2 --seed 5";
  ASSERT_EQ(run_cli(common + " --jobs 1 --out " + a.string()), 0);
  ASSERT_EQ(run_cli(common + " --jobs 2 --out " + b.string()), 0);
  EXPECT_EQ(slurp(a / "convergence.csv"), slurp(b / "convergence.csv"));
  EXPECT_EQ(slurp(a / "convergence_summary.csv"), slurp(b / "convergence_summary.csv"));
  EXPECT_EQ(first_line(a / "convergence.csv"), decoc::kConvergenceHeader);
  EXPECT_EQ(first_line(a / "convergence_summary.csv"), decoc::kSummaryHeader);
}

TEST(Cli, ConfigFileOverridesBuiltin) {
  const auto dir = scratch("config");
  {
    std::ofstream f(dir / "s.json");
    f << decoc::serialize(decoc::builtin("bottleneck"));
  }
  EXPECT_EQ(run_cli("config --config " + (dir / "s.json").string()), 0);
  EXPECT_EQ(run_cli("run --config " + (dir / "s.json").string() +
                    " --iterations 20 --depth 4 --epochs 2 --red-speed 9 --out " + dir.string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "trajectory.csv"));
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("codes");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("run --no-such-flag"), 1);
  EXPECT_EQ(run_cli("run --mode sometimes"), 1);
  EXPECT_EQ(run_cli("run --scenario roundabout"), 2);
  EXPECT_EQ(run_cli("run --iterations 0"), 2);
  EXPECT_EQ(run_cli("run --flat --domain-knowledge"), 2);
  EXPECT_EQ(run_cli("run --scenario overtake --red-speed 9"), 2);
  EXPECT_EQ(run_cli("config --config " + (dir / "missing.json").string()), 2);
  {
    std::ofstream f(dir / "bad.json");
    f << "{\"name\": 3}";
  }
  EXPECT_EQ(run_cli("config --config " + (dir / "bad.json").string()), 2);
  EXPECT_EQ(run_cli("sweep --algorithms greedy"), 2);
}
