#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ocil/ocil.hpp"
#include "test_util.hpp"

using namespace ocil;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(
[experiment]
name = small
methods = ours, finetune
seeds = 1, 2, 3, 4, 5
jobs = 3
loss_trace = true

[data]
classes = 6
dim = 4
count_min = 20
count_max = 40
seed = 2

[schedule]
initial = 2
step = 2

[model]
hidden = 8
)";

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream o;
  o << in.rdbuf();
  return o.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(OCIL_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST(Experiment, TenRowsPerStepAndArtifacts) {
  const auto cfg = parse(kSmall);
  const auto dir = ocil::testing::temp_dir("exp_rows");
  const auto report = run_experiment(cfg, dir.string());
  EXPECT_EQ(report.failed, 0u);
  EXPECT_EQ(report.directory.filename().string(), "small-" + config_hash(cfg));
  std::ifstream csv(report.directory / "metrics.csv");
  const auto rows = read_metrics_csv(csv);
  std::map<std::size_t, std::size_t> per_step;
  for (const auto& r : rows) ++per_step[r.step];
  ASSERT_EQ(per_step.size(), 3u);
  for (const auto& [_, n] : per_step) EXPECT_EQ(n, 10u);
  for (const char* f : {"config.ini", "metrics.json", "report.txt", "curves/ours.dat", "curves/finetune.dat",
                        "checkpoints/ours-seed3-step2.bin", "checkpoints/ours-seed3-step2.json",
                        "losses/finetune-seed1.csv"})
    EXPECT_TRUE(fs::exists(report.directory / f)) << f;
  ASSERT_EQ(report.aggregates.size(), 2u);
  EXPECT_EQ(report.aggregates[0].runs, 5u);
}

TEST(Experiment, CsvMatchesReportedRuns) {
  const auto cfg = parse(kSmall);
  const auto dir = ocil::testing::temp_dir("exp_csv");
  const auto report = run_experiment(cfg, dir.string());
  std::ifstream csv(report.directory / "metrics.csv");
  const auto rows = read_metrics_csv(csv);
  std::size_t i = 0;
  for (const auto& r : report.runs)
    for (std::size_t s = 0; s < r.per_step_accuracy.size(); ++s, ++i) {
      ASSERT_LT(i, rows.size());
      EXPECT_EQ(rows[i], (CsvRow{r.method, r.seed, s, r.per_step_accuracy[s]}));
    }
  EXPECT_EQ(i, rows.size());
}

TEST(Experiment, RerunIsByteIdentical) {
  auto cfg = parse(kSmall);
  const auto a = run_experiment(cfg, ocil::testing::temp_dir("exp_det_a").string());
  cfg.jobs = 1;  // thread count must not matter
  const auto b = run_experiment(cfg, ocil::testing::temp_dir("exp_det_b").string());
  for (const auto& entry : fs::recursive_directory_iterator(a.directory)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a.directory);
    EXPECT_EQ(slurp(entry.path()), slurp(b.directory / rel)) << rel;
  }
}

TEST(Experiment, SeedsChangeResults) {
  const auto cfg = parse(kSmall);
  const auto r = run_experiment(cfg, ocil::testing::temp_dir("exp_seeds").string());
  std::set<std::vector<double>> curves;
  for (const auto& run : r.runs)
    if (run.method == "ours") curves.insert(run.per_step_accuracy);
  EXPECT_GT(curves.size(), 1u);
}

TEST(Experiment, HashTracksEffectiveSettings) {
  auto a = parse(kSmall);
  auto b = parse(kSmall);
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.learner.budget_q = 10;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(parse(canonical_config(a))), config_hash(a));
}

TEST(Sweep, TableHasMethodRowsAndBudgetColumns) {
  auto cfg = parse(kSmall);
  cfg.seeds = {1, 2};
  const auto dir = ocil::testing::temp_dir("sweep");
  const auto table = run_budget_sweep(cfg, {5, 10}, dir.string());
  EXPECT_EQ(table.failed, 0u);
  const auto text = slurp(dir / "small-budget-sweep.csv");
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "method,q=5,q=10");
  std::vector<std::string> methods;
  while (std::getline(in, line)) methods.push_back(line.substr(0, line.find(',')));
  EXPECT_EQ(methods, (std::vector<std::string>{"ours", "finetune"}));
  EXPECT_EQ(table.avg.at("ours").size(), 2u);
}

TEST(Config, Defaults) {
  const auto c = parse("");
  EXPECT_EQ(c.top_k, 1u);
  EXPECT_EQ(c.learner.loss.temperature, 2.0);
  EXPECT_EQ(c.learner.loss.beta, 0.5);
  EXPECT_EQ(c.learner.budget_q, 20u);
  EXPECT_EQ(c.learner.batch_size, 32u);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse("[experiment]\nmethods = ours, nonsense\n"), InvalidConfig);
  EXPECT_THROW(parse("[train]\nbatch_size = 33\n"), InvalidConfig);
  EXPECT_THROW(parse("[train]\nbudgte = 3\n"), InvalidConfig);
  EXPECT_THROW(parse("[trian]\nbudget = 3\n"), InvalidConfig);
  EXPECT_THROW(parse("[train]\nbeta = lots\n"), InvalidConfig);
  EXPECT_THROW(parse("[train]\nbeta = 1.5\n"), InvalidConfig);
  EXPECT_THROW(parse("[experiment]\ntop_k = 0\n"), InvalidConfig);
  EXPECT_THROW(parse("[data]\nsource = csv\n"), InvalidConfig);
  EXPECT_THROW(parse("[data]\ncount_min = 1\n"), InvalidConfig);
  EXPECT_THROW(parse("[experiment\n"), InvalidConfig);
  EXPECT_THROW(load_config("/nonexistent/x.ini"), InvalidConfig);
}

TEST(Config, FailedCellIsReportedNotFatal) {
  auto cfg = parse(kSmall);
  cfg.seeds = {1};
  cfg.initial_classes = 7;  // more classes than the data has
  const auto r = run_experiment(cfg, ocil::testing::temp_dir("exp_fail").string());
  EXPECT_EQ(r.failed, 2u);
  for (const auto& run : r.runs) EXPECT_TRUE(run.failed);
  EXPECT_NE(slurp(r.directory / "report.txt").find("FAILED"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  const auto dir = ocil::testing::temp_dir("cli");
  const auto good = dir / "good.ini";
  std::ofstream(good) << kSmall;
  const auto bad = dir / "bad.ini";
  std::ofstream(bad) << "[train]\nbatch_size = 7\n";
  const auto out = (dir / "out").string();
  EXPECT_EQ(run_cli("run --config " + good.string() + " --seeds 1 --out " + out), 0);
  EXPECT_EQ(run_cli("run --config " + bad.string() + " --out " + out), 2);
  EXPECT_EQ(run_cli("run --config " + good.string() + " --methods bogus --out " + out), 2);
  EXPECT_NE(run_cli("run"), 0);
  EXPECT_NE(run_cli("frobnicate"), 0);
  EXPECT_EQ(run_cli("generate --config " + good.string() + " --out " + (dir / "d.csv").string()), 0);
  EXPECT_GT(ingest_feature_csv((dir / "d.csv").string(), 0.2, 0).classes().size(), 1u);
}
