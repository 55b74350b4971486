#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <string>

#include "json.hpp"
#include "test_util.hpp"

using memshield::testing::slurp;
using memshield::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args, const TempDir& dir) {
  const auto log = dir / "cli.log";
  const std::string cmd = std::string("\"") + MEMSHIELD_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

// Small 15-subtype fixture written through the CLI itself.
std::string make_csv(const TempDir& dir) {
  const auto r = run("fixture --seed 3 --out \"" + dir.path().string() +
                         "\" --benign 300 --per-subtype 20 --features 6 --informative 3",
                     dir);
  EXPECT_EQ(r.code, 0) << r.output;
  return (dir / "fixture" / "fixture.csv").string();
}

}  // namespace

TEST(Cli, HelpAndUnknownCommand) {
  TempDir dir("cli");
  EXPECT_EQ(run("--help", dir).code, 0);
  EXPECT_EQ(run("frobnicate", dir).code, 2);
  EXPECT_EQ(run("", dir).code, 2);
  EXPECT_EQ(run("stage1 --bogus-flag", dir).code, 2);
}

TEST(Cli, UnknownSubtypeListsValidNames) {
  TempDir dir("cli");
  const auto csv = make_csv(dir);
  const auto r = run("subtype --name NotASubtype --seed 1 --data \"" + csv + "\"", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("Transponder"), std::string::npos);
  EXPECT_NE(r.output.find("Zeus"), std::string::npos);
}

TEST(Cli, TrainingWithoutSeedIsUsageError) {
  TempDir dir("cli");
  const auto csv = make_csv(dir);
  const auto r = run("stage1 --data \"" + csv + "\"", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("--seed"), std::string::npos);
}

TEST(Cli, MissingDataIsDataError) {
  TempDir dir("cli");
  const auto r = run("validate --data \"" + (dir / "absent.csv").string() + "\"", dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("cannot open"), std::string::npos);
}

TEST(Cli, ValidateCountMismatchFails) {
  TempDir dir("cli");
  ASSERT_EQ(run("fixture --seed 1 --cic-scale 0.01 --out \"" + dir.path().string() + "\"", dir).code, 0);
  const auto csv = (dir / "fixture" / "fixture.csv").string();
  const auto out = dir.path().string();
  EXPECT_EQ(run("validate --data \"" + csv + "\" --out \"" + out + "\"", dir).code, 1);
  EXPECT_EQ(run("validate --no-count-check --data \"" + csv + "\" --out \"" + out + "\"", dir).code, 0);
  const auto j = nlohmann::json::parse(slurp(dir / "validate" / "counts.json"));
  EXPECT_EQ(j["schema_version"], 1);
  EXPECT_EQ(j["result"]["features"], 55);
}

TEST(Cli, SubtypeThenExplainAndBench) {
  TempDir dir("cli");
  const auto csv = make_csv(dir);
  const auto out = dir.path().string();
  const auto r = run("subtype --name transponder --seed 5 --k 3 --trees 20 --background 30 --data \"" + csv +
                         "\" --out \"" + out + "\"",
                     dir);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto sub = dir / "subtype" / "Transponder";
  for (const auto* f : {"model.mshd", "model.json", "background.csv", "features.csv"}) {
    EXPECT_TRUE(fs::exists(sub / f)) << f;
  }
  const auto model = (sub / "model.mshd").string();
  const auto j = nlohmann::json::parse(slurp(sub / "model.json"));
  EXPECT_EQ(j["run_config"]["seed"], 5);
  EXPECT_EQ(j["result"]["selected_features"].size(), 3u);

  auto e = run("explain --model \"" + model + "\" --background \"" + (sub / "background.csv").string() +
                   "\" --instance 4 --data \"" + csv + "\" --out \"" + out + "\"",
               dir);
  ASSERT_EQ(e.code, 0) << e.output;
  EXPECT_TRUE(fs::exists(dir / "explain" / "instance_4.svg"));
  const auto att = nlohmann::json::parse(slurp(dir / "explain" / "instance_4.json"))["result"];
  double total = att["base_value"].get<double>();
  for (const auto& [k, v] : att["phi"].items()) total += v.get<double>();
  EXPECT_NEAR(total, att["prediction"].get<double>(), 1e-9);

  e = run("explain --model \"" + model + "\" --beeswarm --sample 25 --seed 2 --data \"" + csv + "\" --out \"" +
              out + "\"",
          dir);
  ASSERT_EQ(e.code, 0) << e.output;
  EXPECT_TRUE(fs::exists(dir / "explain" / "beeswarm.svg"));
  EXPECT_TRUE(fs::exists(dir / "explain" / "beeswarm.csv"));

  EXPECT_EQ(run("explain --model \"" + model + "\" --instance 999999 --data \"" + csv + "\" --background \"" +
                    (sub / "background.csv").string() + "\" --out \"" + out + "\"",
                dir)
                .code,
            2);

  const auto b = run("bench --model \"" + model + "\" --reps 2000 --warmup 100 --throughput-threads 2 --data \"" +
                         csv + "\" --out \"" + out + "\"",
                     dir);
  ASSERT_EQ(b.code, 0) << b.output;
  EXPECT_NE(b.output.find("5.700"), std::string::npos);
  ASSERT_TRUE(fs::exists(dir / "bench" / "bench.json"));
  const auto report = slurp(dir / "bench" / "bench.json");
  EXPECT_NE(report.find("\"scaling_latency\""), std::string::npos);
  EXPECT_NE(report.find("\"predictions_per_second\""), std::string::npos);
}

TEST(Cli, CorruptModelIsDataError) {
  TempDir dir("cli");
  const auto csv = make_csv(dir);
  memshield::testing::spit(dir / "bad.mshd", "MSHD garbage");
  EXPECT_EQ(run("bench --model \"" + (dir / "bad.mshd").string() + "\" --data \"" + csv + "\"", dir).code, 1);
}

TEST(Cli, StageOneAndSweepWriteReports) {
  TempDir dir("cli");
  const auto csv = make_csv(dir);
  const auto out = dir.path().string();
  auto r = run("stage1 --seed 1 --trees 10 --cv 3 --data \"" + csv + "\" --out \"" + out + "\"", dir);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir / "stage1" / "baselines.json"));
  EXPECT_TRUE(fs::exists(dir / "stage1" / "cv.csv"));
  const auto table = slurp(dir / "stage1" / "baselines.csv");
  EXPECT_EQ(table.rfind("# run_config: ", 0), 0u);

  r = run("sweep --seed 1 --trees 10 --k-list 1,2,3 --format csv --data \"" + csv + "\" --out \"" + out + "\"", dir);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir / "sweep" / "Transponder.csv"));
  EXPECT_FALSE(fs::exists(dir / "sweep" / "Transponder.json"));
  EXPECT_EQ(run("sweep --seed 1 --k-list 1,x --data \"" + csv + "\"", dir).code, 2);
}

TEST(Cli, InputFileIsNotModified) {
  TempDir dir("cli");
  const auto csv = make_csv(dir);
  const auto before = slurp(csv);
  ASSERT_EQ(run("transfer --seed 2 --trees 5 --k 2 --name Zeus --data \"" + csv + "\" --out \"" +
                    dir.path().string() + "\"",
                dir)
                .code,
            0);
  EXPECT_EQ(slurp(csv), before);
  EXPECT_TRUE(fs::exists(dir / "transfer" / "results" / "Zeus.json"));
  EXPECT_TRUE(fs::exists(dir / "transfer" / "summary.csv"));
}
