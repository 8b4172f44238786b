#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

// Set GOMEA_UPDATE_GOLDEN=1 to rewrite the golden files from the current binary.
const fs::path kGolden = GOMEA_GOLDEN_DIR;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gomea_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int cli(const std::string& args, const fs::path& dir) {
  const std::string cmd = "cd '" + dir.string() + "' && '" + GOMEA_CLI_PATH + "' " + args + " > stdout.txt 2> stderr.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void expect_golden(const fs::path& produced, const std::string& golden_name) {
  const fs::path golden = kGolden / golden_name;
  if (std::getenv("GOMEA_UPDATE_GOLDEN")) {
    fs::create_directories(kGolden);
    fs::copy_file(produced, golden, fs::copy_options::overwrite_existing);
  }
  ASSERT_TRUE(fs::exists(golden)) << golden;
  EXPECT_EQ(slurp(produced), slurp(golden)) << golden_name;
}

}  // namespace

TEST(Cli, RunSmokeExitsZero) {
  const auto d = scratch("run_ok");
  EXPECT_EQ(cli("run --problem sphere --dim 10 --mode univariate --pop 64 --seed 1", d), 0);
  const auto doc = nlohmann::json::parse(slurp(d / "stdout.txt"));
  EXPECT_TRUE(doc["success"].get<bool>());
}

TEST(Cli, ExitCodes) {
  const auto d = scratch("exit_codes");
  EXPECT_EQ(cli("run --problem nosuch", d), 1);
  EXPECT_NE(slurp(d / "stderr.txt").find("rebgrid"), std::string::npos);
  EXPECT_EQ(cli("run --problem sphere --dim 4 --budget 0", d), 2);
  EXPECT_EQ(cli("run --mode nosuch", d), 1);
  EXPECT_EQ(cli("run --problem rebgrid --dim 7", d), 1);
  EXPECT_NE(slurp(d / "stderr.txt").find("9"), std::string::npos);
  EXPECT_EQ(cli("run --format xml", d), 1);
  EXPECT_EQ(cli("", d), 1);
  EXPECT_EQ(cli("--help", d), 0);
  EXPECT_EQ(cli("dsm --mode static_mcond_hg", d), 1);
  EXPECT_EQ(cli("bisect --pop 32", d), 1);
}

TEST(Cli, HelpListsEveryFlag) {
  const auto d = scratch("help");
  ASSERT_EQ(cli("run --help", d), 0);
  const auto help = slurp(d / "stdout.txt");
  for (const char* flag : {"--config", "--problem", "--dim", "--mode", "--pop", "--seed", "--budget", "--vtr",
                           "--time-limit", "--max-generations", "--out", "--format"})
    EXPECT_NE(help.find(flag), std::string::npos) << flag;
}

TEST(Cli, RunGolden) {
  const auto d = scratch("run_golden");
  ASSERT_EQ(cli("run --problem reb2strong --dim 6 --mode fb_mcond_hg_cs --pop 24 --seed 5 --out out", d), 0);
  expect_golden(d / "out" / "trace.csv", "run_trace.csv");
  expect_golden(d / "out" / "result.json", "run_result.json");
  const auto again = scratch("run_golden_again");
  ASSERT_EQ(cli("run --problem reb2strong --dim 6 --mode fb_mcond_hg_cs --pop 24 --seed 5 --out out", again), 0);
  EXPECT_EQ(slurp(d / "out" / "trace.csv"), slurp(again / "out" / "trace.csv"));
}

TEST(Cli, RunCsvSummary) {
  const auto d = scratch("run_csv");
  ASSERT_EQ(cli("run --problem sphere --dim 5 --seed 2 --format csv", d), 0);
  expect_golden(d / "stdout.txt", "run_summary.csv");
}

TEST(Cli, ConfigMergesWithFlagsWinning) {
  const auto d = scratch("config");
  std::ofstream(d / "cfg.json") << R"({"schema_version": 1, "problem": "sphere", "dim": 5, "pop": 16, "seed": 3})";
  ASSERT_EQ(cli("run --config cfg.json --seed 4", d), 0);
  const auto doc = nlohmann::json::parse(slurp(d / "stdout.txt"));
  EXPECT_EQ(doc["dimension"], 5);
  EXPECT_EQ(doc["population_size"], 16);
  EXPECT_EQ(doc["seed"], 4);

  std::ofstream(d / "unknown.json") << R"({"schema_version": 1, "colour": "red"})";
  EXPECT_EQ(cli("run --config unknown.json", d), 1);
  std::ofstream(d / "version.json") << R"({"schema_version": 9, "dim": 5})";
  EXPECT_EQ(cli("run --config version.json", d), 1);
  std::ofstream(d / "type.json") << R"({"schema_version": 1, "dim": "five"})";
  EXPECT_EQ(cli("run --config type.json", d), 1);
  EXPECT_EQ(cli("run --config missing.json", d), 1);
}

TEST(Cli, DsmWritesPerRunAndAveragedFiles) {
  const auto d = scratch("dsm");
  ASSERT_EQ(cli("dsm --problem rebgrid --dim 9 --runs 30 --max-generations 6 --out out", d), 0);
  int per_run = 0;
  for (const auto& e : fs::directory_iterator(d / "out")) {
    const auto name = e.path().filename().string();
    if (name.rfind("dsm_rebgrid_", 0) == 0 && name != "dsm_rebgrid_mean.csv" && e.path().extension() == ".csv") ++per_run;
  }
  EXPECT_EQ(per_run, 30);
  EXPECT_TRUE(fs::exists(d / "out" / "dsm_rebgrid_mean.csv"));
  const auto side = nlohmann::json::parse(slurp(d / "out" / "dsm_rebgrid.json"));
  EXPECT_EQ(side["runs"].size(), 30u);
  EXPECT_EQ(side["schema_version"], 1);
}

TEST(Cli, DsmGolden) {
  const auto d = scratch("dsm_golden");
  ASSERT_EQ(cli("dsm --problem reb5noverlap --dim 10 --runs 2 --max-generations 4 --seed 7 --out out", d), 0);
  expect_golden(d / "out" / "dsm_reb5noverlap_mean.csv", "dsm_mean.csv");
  expect_golden(d / "out" / "dsm_reb5noverlap.json", "dsm_sidecar.json");
  expect_golden(d / "stdout.txt", "dsm_summary.csv");
}

TEST(Cli, BisectGoldenAndDeterministic) {
  const std::string args =
      "bisect --problems sphere --dims 4 --modes univariate full --repeats 3 --bisections 2 --max-pop 64 --budget 1e5 --out out";
  const auto d = scratch("bisect");
  ASSERT_EQ(cli(args, d), 0);
  const auto again = scratch("bisect_again");
  ASSERT_EQ(cli(args, again), 0);
  for (const char* f : {"scalability.csv", "bisection.json", "stats.csv"}) {
    EXPECT_EQ(slurp(d / "out" / f), slurp(again / "out" / f)) << f;
    expect_golden(d / "out" / f, std::string("bisect_") + f);
  }
  const auto doc = nlohmann::json::parse(slurp(d / "out" / "bisection.json"));
  EXPECT_EQ(doc["schema_version"], 1);
}

TEST(Cli, BisectJsonSummaryHasFiniteMetrics) {
  const auto d = scratch("bisect_json");
  ASSERT_EQ(cli("bisect --problems reb2weak --dims 10 --repeats 3 --bisections 1 --format json --out out", d), 0);
  const auto rows = nlohmann::json::parse(slurp(d / "stdout.txt"));
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) EXPECT_NE(r["corrected_evaluations"], "inf");
}
