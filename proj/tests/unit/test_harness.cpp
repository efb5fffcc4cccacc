#include "advex/harness.hpp"
#include "test_targets_util.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace advex {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("advex_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

struct CliResult {
  int code = -1;
  std::string err;
};

CliResult run_cli(const std::string& args) {
  const fs::path err = fs::temp_directory_path() / ("advex_cli_err_" + std::to_string(::getpid()));
  const std::string cmd = std::string(ADVEX_EXAMINER_CLI) + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  fs::remove(err);
  return r;
}

ExperimentConfig landscape_config(const std::string& examiner, int T, std::vector<std::uint64_t> seeds) {
  ExperimentConfig c;
  c.target_kind = "landscape";
  c.landscape = "three-bump";
  c.examiner = examiner;
  c.T = T;
  c.seeds = std::move(seeds);
  c.ucb.candidates = 300;
  return c;
}

ExperimentConfig quick_shapes(const fs::path& out) {
  ExperimentConfig c;
  c.out = out.string();
  c.training.epochs = 150;
  c.heldout_count = 40;
  c.standard_n = 50;
  return c;
}

ExamTrace three_step_trace() {
  ExamTrace tr;
  tr.instance_id = "disk-0";
  tr.seed = 1;
  for (int t = 1; t <= 3; ++t) tr.steps.push_back({t, Scenario::Constant(2, 0.1 * t), 0.2 * t, std::nullopt});
  tr.finalize();
  return tr;
}

TEST(Reports, CurveCsvFormat) {
  std::ostringstream out;
  write_curve_csv(out, {three_step_trace()});
  const auto rows = csv_rows(out.str());
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "instance,t,loss,p_true");
  EXPECT_EQ(rows[1], (std::vector<std::string>{"disk-0", "1", "0.2", "0.8"}));
  EXPECT_EQ(rows[3][1], "3");
}

TEST(Reports, CurveCsvAveragesSeeds) {
  ExamTrace a = three_step_trace(), b = three_step_trace();
  b.seed = 2;
  for (ExamStep& s : b.steps) s.loss += 0.1;
  std::ostringstream out;
  write_curve_csv(out, {a, b});
  const auto rows = csv_rows(out.str());
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_NEAR(std::stod(rows[1][2]), 0.25, 1e-15);
  std::ostringstream by_seed;
  write_seed_curve_csv(by_seed, {a, b});
  EXPECT_EQ(csv_rows(by_seed.str()).size(), 7u);
}

TEST(Reports, ScenarioCsvKeepsLastK) {
  ExamTrace tr = three_step_trace();
  tr.steps[2].correct = true;
  std::ostringstream out;
  write_scenario_csv(out, {tr}, testing::unit_space(2), 2);
  const auto rows = csv_rows(out.str());
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"instance", "seed", "t", "f0", "f1", "loss", "p_true", "correct"}));
  EXPECT_EQ(rows[1][2], "2");
  EXPECT_EQ(rows[1][7], "");
  EXPECT_EQ(rows[2][7], "1");
}

TEST(Reports, GroupOf) {
  EXPECT_EQ(group_of("disk-0"), "disk");
  EXPECT_EQ(group_of("ridge"), "ridge");
}

TEST(Reports, AggregatesRecomputableFromCsv) {
  const fs::path dir = scratch("selfcheck");
  ExperimentConfig c = landscape_config("random", 40, {1, 2, 3});
  c.out = dir.string();
  const nlohmann::json report = cmd_examine(c);

  // Per-class means from the per-step rows.
  const auto seed_rows = csv_rows(slurp(dir / "loss_vs_t_by_seed.csv"));
  std::map<std::string, double> last;
  for (size_t i = 1; i < seed_rows.size(); ++i) last[seed_rows[i][1]] = std::stod(seed_rows[i][4]);
  double mean_final = 0.0;
  for (const auto& [seed, p] : last) mean_final += p / static_cast<double>(last.size());
  EXPECT_NEAR(mean_final, report["mean_final_p_true"].get<double>(), 1e-9);

  // In weakness mode the best run has the lowest p_true.
  double mean_best = 0.0;
  std::map<std::string, double> worst;
  for (size_t i = 1; i < seed_rows.size(); ++i) {
    const std::string key = seed_rows[i][1];
    const double p = std::stod(seed_rows[i][4]);
    worst[key] = worst.count(key) ? std::min(worst[key], p) : p;
  }
  for (const auto& [seed, p] : worst) mean_best += p / static_cast<double>(worst.size());
  EXPECT_NEAR(mean_best, report["mean_best_p_true"].get<double>(), 1e-9);

  const auto class_rows = csv_rows(slurp(dir / "per_class.csv"));
  ASSERT_EQ(class_rows.size(), 2u);
  EXPECT_NEAR(std::stod(class_rows[1][2]), report["classes"][0]["mean_final_p_true"].get<double>(), 1e-9);
  EXPECT_NEAR(std::stod(class_rows[1][3]), mean_best, 1e-9);

  const auto curve_rows = csv_rows(slurp(dir / "loss_vs_t.csv"));
  ASSERT_EQ(curve_rows.size(), 41u);
  for (size_t t = 1; t < curve_rows.size(); ++t) {
    EXPECT_NEAR(std::stod(curve_rows[t][2]), report["mean_loss_curve"][t - 1].get<double>(), 1e-9);
  }

  // The trace file reproduces the report.
  std::ifstream traces(dir / "traces.jsonl");
  Examination exam;
  exam.traces = read_trace_jsonl(traces, "traces.jsonl");
  ASSERT_EQ(exam.traces.size(), 3u);
  const nlohmann::json again = build_report(exam, c);
  EXPECT_EQ(again["mean_best_p_true"], report["mean_best_p_true"]);
  EXPECT_EQ(again["instances"], report["instances"]);
  fs::remove_all(dir);
}

TEST(Reports, CmdReportIsByteStable) {
  const fs::path dir = scratch("bytes");
  ExperimentConfig c = landscape_config("bo", 30, {4});
  c.out = (dir / "run").string();
  fs::create_directories(c.out);
  cmd_examine(c);
  const std::string traces = (dir / "run" / "traces.jsonl").string();
  std::map<std::string, std::string> first;
  for (const char* sub : {"a", "b"}) {
    ExperimentConfig r = c;
    r.out = (dir / sub).string();
    fs::create_directories(r.out);
    cmd_report({traces}, r);
    for (const char* name : {"report.json", "loss_vs_t.csv", "per_class.csv", "scenarios.csv"}) {
      const std::string bytes = slurp(dir / sub / name);
      EXPECT_FALSE(bytes.empty()) << name;
      if (first.count(name)) {
        EXPECT_EQ(bytes, first[name]) << name;
      } else {
        first[name] = bytes;
      }
    }
  }
  // Shared files equal those of the examination itself.
  EXPECT_EQ(first["loss_vs_t.csv"], slurp(dir / "run" / "loss_vs_t.csv"));
  EXPECT_EQ(first["scenarios.csv"], slurp(dir / "run" / "scenarios.csv"));
  fs::remove_all(dir);
}

TEST(Reports, CorruptTraceFileNamesLine) {
  const fs::path dir = scratch("corrupt");
  const fs::path bad = dir / "bad.jsonl";
  std::ofstream(bad) << R"({"instance":"a","t":1,"scenario":[0.5],"loss":0.1})" << "\nnot json\n";
  ExperimentConfig c;
  c.out = dir.string();
  try {
    cmd_report({bad.string()}, c);
    FAIL();
  } catch (const InvalidConfig& e) {
    EXPECT_NE(std::string(e.what()).find("bad.jsonl:2"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(Examine, RandomExaminerIsBestOfUniformDraws) {
  const ExperimentConfig c = landscape_config("random", 500, {7});
  const std::vector<NamedTarget> targets = landscape_targets(c);
  const Examination exam = examine(targets, c);
  Rng rng = Rng::stream(7, 100);
  double best = -1.0;
  for (int i = 0; i < 500; ++i) best = std::max(best, targets[0].target->evaluate(targets[0].target->space().sample_uniform(rng)));
  EXPECT_EQ(exam.traces[0].best_loss, best);
}

TEST(Examine, CheckpointsMonotoneUnderBest) {
  for (const char* examiner : {"random", "rl", "bo"}) {
    ExperimentConfig c = landscape_config(examiner, 120, {1, 2});
    c.t_checkpoints = {0, 10, 40, 80, 120};
    const nlohmann::json report = build_report(examine(landscape_targets(c), c), c);
    const auto& table = report["t_checkpoints"];
    ASSERT_EQ(table.size(), 5u);
    EXPECT_EQ(table[0]["T"].get<int>(), 0);
    for (size_t i = 2; i < table.size(); ++i) {
      EXPECT_LE(table[i]["p_true"].get<double>(), table[i - 1]["p_true"].get<double>()) << examiner;
    }
  }
}

TEST(Examine, ShortRunsEqualPrefixesOfLongRuns) {
  for (const char* examiner : {"random", "rl", "bo"}) {
    const ExperimentConfig long_run = landscape_config(examiner, 150, {3});
    const Examination full = examine(landscape_targets(long_run), long_run);
    for (int T : {40, 100}) {
      const ExperimentConfig short_run = landscape_config(examiner, T, {3});
      const Examination part = examine(landscape_targets(short_run), short_run);
      for (int t = 0; t < T; ++t) {
        ASSERT_EQ(part.traces[0].steps[t].scenario, full.traces[0].steps[t].scenario) << examiner << " t " << t;
      }
      EXPECT_EQ(part.traces[0].best_loss, full.traces[0].best_up_to(T)) << examiner;
    }
  }
}

TEST(Examine, StrengthAndWeaknessDiffer) {
  ExperimentConfig c = landscape_config("bo", 100, {5});
  const Examination weak = examine(landscape_targets(c), c);
  c.direction = Direction::Strength;
  const Examination strong = examine(landscape_targets(c), c);
  EXPECT_NE(weak.traces[0].steps.back().scenario, strong.traces[0].steps.back().scenario);
  EXPECT_GT(weak.traces[0].best_loss, 0.5);
  EXPECT_LT(strong.traces[0].best_loss, 0.05);
  for (int t = 2; t <= 100; ++t) EXPECT_LE(strong.traces[0].best_up_to(t), strong.traces[0].best_up_to(t - 1));
}

TEST(Examine, SnapshotsWritten) {
  const fs::path dir = scratch("snap");
  ExperimentConfig c = landscape_config("rl", 64, {1});
  c.rl.batch_size = 16;
  c.out = dir.string();
  c.snapshot_every = 32;
  examine(landscape_targets(c), c);
  const fs::path snap = dir / "snapshots" / "three-bump_seed1_t32.json";
  ASSERT_TRUE(fs::exists(snap));
  EXPECT_TRUE(fs::exists(dir / "snapshots" / "three-bump_seed1_t64.json"));
  const nlohmann::json j = nlohmann::json::parse(slurp(snap));
  EXPECT_EQ(j["updates_applied"].get<int>(), 2);
  fs::remove_all(dir);
}

TEST(Examine, RecoveryRateCountsOutsideScenarios) {
  ExamTrace tr;
  const ScenarioSpace space = render_space();
  for (int t = 1; t <= 4; ++t) {
    Scenario s = space.lower();
    s[render_factor::brightness] = t <= 2 ? 0.3 : 0.8;
    tr.steps.push_back({t, s, 0.5, std::nullopt});
  }
  const Restriction r{"foreground_brightness", 0.6, 1.0};
  EXPECT_EQ(recovery_rate(tr, space, r, 4), 0.5);
  EXPECT_EQ(recovery_rate(tr, space, r, 2), 0.0);
  EXPECT_NEAR(excluded_fraction(space, r), 0.5, 1e-15);
}

TEST(Config, JsonRoundTripAndManifest) {
  ExperimentConfig c = landscape_config("bo", 77, {3, 4});
  c.t_checkpoints = {0, 50};
  c.restriction = Restriction{"scale", 0.6, 1.0};
  c.rl.factor_order = {2, 0, 1};
  const nlohmann::json j = c;
  const ExperimentConfig back = j.get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back), j);

  const fs::path dir = scratch("cfg");
  std::ofstream(dir / "manifest.json") << nlohmann::json{{"command", "examine"}, {"config", j}, {"artifacts", {}}}.dump();
  EXPECT_EQ(nlohmann::json(load_config((dir / "manifest.json").string())), j);
  fs::remove_all(dir);
}

TEST(Config, Validation) {
  ExperimentConfig c;
  c.seeds.clear();
  EXPECT_THROW(c.validate(), InvalidConfig);
  c = ExperimentConfig{};
  c.t_checkpoints = {0, 600};
  EXPECT_THROW(c.validate(), InvalidConfig);
  c = ExperimentConfig{};
  c.instances = {"hexagon-0"};
  EXPECT_THROW(c.validate(), InvalidConfig);
  c = ExperimentConfig{};
  c.restriction = Restriction{"foreground_brightness", 0.1, 1.1};
  EXPECT_THROW(c.validate(), InvalidConfig);
  c = ExperimentConfig{};
  c.examiner = "rl";
  c.rl.factor_order = {0, 1};
  EXPECT_THROW(make_examiner_factory(c, render_space()), InvalidConfig);
}

TEST(Train, WritesCheckpointMetricsAndManifest) {
  const fs::path dir = scratch("train");
  const ExperimentConfig c = quick_shapes(dir);
  const nlohmann::json metrics = cmd_train(c);
  EXPECT_TRUE(fs::exists(dir / "checkpoint.json"));
  EXPECT_TRUE(fs::exists(dir / "metrics.json"));
  const nlohmann::json manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["command"], "train");
  EXPECT_EQ(manifest["master_seed"].get<std::uint64_t>(), 1u);
  EXPECT_EQ(manifest["artifacts"]["checkpoint.json"].get<std::string>(), sha256_file((dir / "checkpoint.json").string()));
  EXPECT_EQ(metrics["loss_curve"].size(), 151u);
  const Checkpoint cp = load_checkpoint((dir / "checkpoint.json").string());
  EXPECT_FALSE(cp.restriction.has_value());
  fs::remove_all(dir);
}

TEST(Train, FewerImagesDoNotGeneralizeBetter) {
  ExperimentConfig c;
  c.heldout_count = 200;
  c.training.m = 1;
  const double one = train_target(c).heldout_accuracy;
  c.training.m = 10;
  const double ten = train_target(c).heldout_accuracy;
  EXPECT_LE(one, ten);
}

TEST(WeaknessStudy, RequiresRestrictionMetadata) {
  const fs::path dir = scratch("norestrict");
  const ExperimentConfig c = quick_shapes(dir);
  cmd_train(c);
  EXPECT_THROW(cmd_weakness_study(c), InvalidConfig);
  fs::remove_all(dir);
}

TEST(WeaknessStudy, FullRangeIsNotApplicable) {
  const fs::path dir = scratch("fullrange");
  ExperimentConfig c = quick_shapes(dir);
  c.restriction = Restriction{"foreground_brightness", 0.2, 1.0};
  c.examiner = "random";
  c.T = 20;
  c.instances = {"disk"};
  cmd_train(c);
  const nlohmann::json report = cmd_weakness_study(c);
  EXPECT_FALSE(report["recovery"]["applicable"].get<bool>());
  EXPECT_TRUE(report["recovery"]["recovery_rate"].is_null());
  fs::remove_all(dir);
}

TEST(Sha256, KnownDigest) {
  const fs::path dir = scratch("sha");
  std::ofstream(dir / "abc", std::ios::binary) << "abc";
  EXPECT_EQ(sha256_file((dir / "abc").string()), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  fs::remove_all(dir);
}

TEST(Cli, MissingOutputDirectory) {
  const CliResult r = run_cli("train --out /nonexistent/advex/dir --m 2");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("cannot write"), std::string::npos) << r.err;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run_cli("").code, 2);
  EXPECT_EQ(run_cli("examine --examiner genetic").code, 2);
  EXPECT_EQ(run_cli("examine --T notanumber").code, 2);
  EXPECT_EQ(run_cli("frobnicate").code, 2);
  EXPECT_EQ(run_cli("--help").code, 0);
}

TEST(Cli, ConfigErrors) {
  const fs::path dir = scratch("clicfg");
  std::ofstream(dir / "bad.json") << "{\"T\": ";
  EXPECT_EQ(run_cli("examine --config " + (dir / "bad.json").string() + " --out " + dir.string()).code, 2);
  EXPECT_EQ(run_cli("examine --config " + (dir / "missing.json").string()).code, 2);
  EXPECT_EQ(run_cli("examine --out " + dir.string() + " --t-checkpoints 0,900 --T 100").code, 2);
  fs::remove_all(dir);
}

TEST(Cli, RuntimeFailureExitsOne) {
  const fs::path dir = scratch("clirt");
  fs::create_directories(dir / "checkpoint.json");  // a directory where a file is expected
  const CliResult r = run_cli("examine --T 5 --out " + dir.string() + " --checkpoint " + (dir / "checkpoint.json").string());
  EXPECT_NE(r.code, 0);
  EXPECT_FALSE(r.err.empty());
  fs::remove_all(dir);
}

TEST(Cli, LandscapeExamination) {
  const fs::path dir = scratch("cliland");
  const CliResult r = run_cli("examine --landscape single-bump --examiner bo --T 30 --seed 1,2 --t-checkpoints 0,10,30 --out " +
                              dir.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const nlohmann::json report = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(report["instances"][0]["runs"].size(), 2u);
  EXPECT_EQ(report["t_checkpoints"].size(), 3u);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace advex
