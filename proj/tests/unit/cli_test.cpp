// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <algorithm>

#include "maxconf/campaign.hpp"
#include "maxconf/portfolio.hpp"
#include "maxconf/tuner.hpp"
#include "test_support.hpp"

namespace maxconf {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::run_cli;

class CliValidate : public ::testing::Test {
 protected:
  void SetUp() override { testing::write_unit_instance(dir_ / "f.wcnf", 3, {}); }

  testing::CliResult check(const std::string& output, std::vector<std::string> extra = {}) {
    testing::write_file(dir_ / "out.txt", output);
    std::vector<std::string> args = std::move(extra);
    args.insert(args.end(), {"validate", (dir_ / "f.wcnf").string(), (dir_ / "out.txt").string()});
    return run_cli(args);
  }

  testing::TempDir dir_;
};

TEST_F(CliValidate, ExitCodes) {
  auto r = check("o 9\nv 100\n");
  EXPECT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("verdict valid"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("cost 1"), std::string::npos);
  EXPECT_NE(r.out.find("reported 9"), std::string::npos);
  EXPECT_EQ(check("s UNKNOWN\n").exit_code, 10);
  EXPECT_EQ(check("v 000\n").exit_code, 11);
  EXPECT_EQ(check("v 1 x\n").exit_code, 12);
  EXPECT_EQ(run_cli({"validate", (dir_ / "missing.wcnf").string(), "-"}).exit_code, 2);
  EXPECT_EQ(run_cli({"validate"}).exit_code, 2);
}

TEST_F(CliValidate, JsonOutput) {
  const auto r = check("v 110\n", {"--json"});
  ASSERT_EQ(r.exit_code, 0);
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["verdict"], "valid");
  EXPECT_EQ(j["true_cost"], 2);
}

TEST(CliTune, InvalidScenarioReportsLine) {
  testing::TempDir dir;
  const auto files = testing::write_convex_scenario(dir.path(), {});
  const auto text = testing::slurp(files.scenario);
  const auto bad_line = std::count(text.begin(), text.end(), '\n') + 1;
  testing::write_file(files.scenario, text + "param z integer [5,1] default 3\n");
  const auto r = run_cli({"--workdir", (dir / "w").string(), "tune", "--scenario", files.scenario.string()});
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("scenario.txt:" + std::to_string(bad_line) + ":"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli({"--workdir", (dir / "w").string(), "tune"}).exit_code, 2);
}

TEST(CliSelect, EmptyArchiveFails) {
  testing::TempDir dir;
  const auto files = testing::write_convex_scenario(dir.path(), {});
  auto c = Campaign::open(dir / "w");
  c.set_scenario(files.scenario, file_hash(files.scenario));
  fs::create_directories(c.tune_dir());
  testing::write_file(c.tune_dir() / "archive.json", Archive{}.to_json().dump());
  testing::write_file(c.tune_dir() / "bounds.txt", testing::slurp(files.bounds));
  c.mark(Stage::Tuned, "x", file_hash(c.tune_dir() / "archive.json"));
  c.save();
  const auto r = run_cli({"--workdir", (dir / "w").string(), "select"});
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("empty"), std::string::npos) << r.err;
}

TEST(CliPipeline, TuneSelectPortfolioSimulate) {
  testing::TempDir dir;
  testing::ConvexScenarioOptions o;
  o.train = {{7, 13, "b"}, {6, 12, "b"}};
  o.test = {{8, 13, "b"}};
  o.num_vars = 300;
  const auto files = testing::write_convex_scenario(dir.path(), o);
  const std::string w = (dir / "w").string();

  auto r = run_cli({"--workdir", w, "--seed", "3", "--workers", "2", "tune", "--scenario", files.scenario.string(),
                    "--budget", "300", "--max-generations", "2", "--population", "8", "--tournaments", "2"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  auto winner = json::parse(testing::slurp(dir / "w" / "tune" / "winner.json"));
  EXPECT_EQ(winner["generations"], 2);
  EXPECT_TRUE(fs::exists(dir / "w" / "tune" / "checkpoint.json"));

  r = run_cli({"--workdir", w, "--seed", "3", "tune", "--resume", "--budget", "300", "--max-generations", "3",
               "--population", "8", "--tournaments", "2"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  winner = json::parse(testing::slurp(dir / "w" / "tune" / "winner.json"));
  EXPECT_EQ(winner["generations"], 3);
  const auto progress = testing::slurp(dir / "w" / "tune" / "progress.log");
  EXPECT_NE(progress.find("generation 3 "), std::string::npos) << progress;

  r = run_cli({"--workdir", w, "select", "--k", "50"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.err.find("clamped"), std::string::npos);
  const auto pool = json::parse(testing::slurp(dir / "w" / "select" / "pool.json"));
  const auto pool_size = pool["candidates"].size();
  EXPECT_GE(pool_size, 2u);

  // A second selection gives the same pool.
  r = run_cli({"--workdir", w, "select", "--k", "50"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(json::parse(testing::slurp(dir / "w" / "select" / "pool.json")), pool);

  r = run_cli({"--workdir", w, "portfolio", "par", "--n", "2"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "w" / "portfolio" / "par" / "entry_02.sh"));
  EXPECT_TRUE(fs::exists(dir / "w" / "portfolio" / "par" / "manifest.json"));
  r = run_cli({"--workdir", w, "portfolio", "par", "--n", std::to_string(pool_size + 1)});
  EXPECT_EQ(r.exit_code, 1);
  r = run_cli({"--workdir", w, "portfolio", "par", "--n", "3", "--kind", "seeds"});
  EXPECT_EQ(r.exit_code, 0) << r.err;

  r = run_cli({"--workdir", w, "portfolio", "seq", "--max-len", "2", "--grid", "0.5,1", "--to", "3"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto schedule = json::parse(testing::slurp(dir / "w" / "portfolio" / "seq" / "schedule.json"));
  const auto n = pool_size;
  EXPECT_EQ(schedule["provenance"]["schedules_evaluated"], (n + n * (n - 1)) * 2);
  EXPECT_EQ(run_cli({"--workdir", w, "portfolio", "seq", "--grid", "1,x"}).exit_code, 2);

  r = run_cli({"--workdir", w, "--json", "simulate"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto sim = json::parse(testing::slurp(dir / "w" / "simulate" / "simulation.json"));
  EXPECT_EQ(sim["per_instance"].size(), 1u);
  EXPECT_TRUE(sim["per_instance"].contains("test0.wcnf"));

  r = run_cli({"--workdir", w, "simulate", "--training"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto train = json::parse(testing::slurp(dir / "w" / "simulate" / "simulation.json"));
  EXPECT_NEAR(train["score"].get<double>(), schedule["provenance"]["train_score"].get<double>(), 1e-12);

  // Changing the scenario makes later stages refuse to run.
  testing::write_file(files.scenario, testing::slurp(files.scenario) + "# edited\n");
  r = run_cli({"--workdir", w, "portfolio", "par", "--n", "1"});
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("changed"), std::string::npos) << r.err;
}

void write_runs(const fs::path& dir, const std::string& config, std::uint64_t seed,
                const std::vector<std::pair<std::string, std::optional<Weight>>>& costs) {
  for (const auto& [inst, cost] : costs) {
    const auto r = testing::synthetic_run(config, inst, seed, cost);
    write_run_log(dir / (r.key() + ".jsonl"), r);
  }
}

TEST(CliScore, TwoSolversMergedRegistries) {
  testing::TempDir dir;
  fs::create_directories(dir / "alpha");
  fs::create_directories(dir / "beta");
  write_runs(dir / "alpha", "c1", 1, {{"i.wcnf", 10}, {"j.wcnf", 20}});
  write_runs(dir / "alpha", "c1", 2, {{"i.wcnf", 10}, {"j.wcnf", std::nullopt}});
  write_runs(dir / "beta", "c2", 1, {{"i.wcnf", 12}, {"j.wcnf", 20}});
  testing::write_file(dir / "r1.txt", "i.wcnf 10 a\nj.wcnf 25 a\n");
  testing::write_file(dir / "r2.txt", "j.wcnf 20 b\n");

  auto r = run_cli({"--json", "score", "--runs", (dir / "alpha").string(), "--runs", (dir / "beta").string(),
                    "--registry", (dir / "r1.txt").string(), "--registry", (dir / "r2.txt").string(), "--csv",
                    (dir / "t.csv").string()});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto rows = json::parse(r.out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0]["solver"], "beta");
  EXPECT_NEAR(rows[0]["mean"].get<double>(), (11.0 / 13.0 + 1.0) / 2, 1e-12);
  EXPECT_EQ(rows[1]["solver"], "alpha");
  EXPECT_EQ(rows[1]["seeds"], 2);
  EXPECT_NEAR(rows[1]["mean"].get<double>(), 0.75, 1e-12);
  EXPECT_NEAR(rows[1]["max"].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(rows[1]["min"].get<double>(), 0.5, 1e-12);
  EXPECT_NEAR(rows[1]["std"].get<double>(), 0.25, 1e-12);
  const auto csv = testing::slurp(dir / "t.csv");
  EXPECT_EQ(csv.rfind("solver,seeds,instances,mean,median,min,max,std\nbeta,1,2,", 0), 0u) << csv;

  r = run_cli({"score", "--runs", (dir / "alpha").string(), "--registry", (dir / "r1.txt").string()});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("solver", 0), 0u);
  EXPECT_NE(r.out.find("alpha"), std::string::npos);

  EXPECT_EQ(run_cli({"score", "--runs", (dir / "alpha").string()}).exit_code, 2);
  EXPECT_EQ(run_cli({"score", "--runs", (dir / "nope").string(), "--include-vbs"}).exit_code, 2);
}

}  // namespace
}  // namespace maxconf
