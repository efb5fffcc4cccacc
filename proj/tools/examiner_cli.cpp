// examiner: train shape classifiers, run adversarial examinations, emit reports.
//
//   examiner train           --config cfg.json --m 10 --out run/
//   examiner examine         --config cfg.json --examiner bo --T 500 --seed 1,2,3 --out run/
//   examiner weakness-study  --config cfg.json --out run/
//   examiner strength        --config cfg.json --out run/
//   examiner report          run/traces.jsonl --out summary/
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include "advex/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Overrides {
  std::string config;
  std::vector<std::uint64_t> seeds;
  int T = 0;
  std::vector<int> t_checkpoints;
  std::string examiner;
  int m = 0;
  std::string out;
  bool dump_images = false;
  std::string checkpoint;
  std::string landscape;
  std::string mode;
  int snapshot_every = 0;
};

advex::ExperimentConfig resolve(const Overrides& o) {
  advex::ExperimentConfig c = o.config.empty() ? advex::ExperimentConfig{} : advex::load_config(o.config);
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (o.T > 0) c.T = o.T;
  if (!o.t_checkpoints.empty()) c.t_checkpoints = o.t_checkpoints;
  if (!o.examiner.empty()) c.examiner = o.examiner;
  if (o.m > 0) c.training.m = o.m;
  if (!o.out.empty()) c.out = o.out;
  if (o.dump_images) c.dump_images = true;
  if (!o.checkpoint.empty()) c.checkpoint = o.checkpoint;
  if (!o.landscape.empty()) {
    c.target_kind = "landscape";
    c.landscape = o.landscape;
  }
  if (o.snapshot_every > 0) c.snapshot_every = o.snapshot_every;
  if (!o.mode.empty()) c.mode = advex::parse_metric_mode(o.mode);
  c.validate();
  return c;
}

void summarize(const nlohmann::json& report) {
  if (report.contains("train_accuracy")) {
    std::cout << "train accuracy " << report["train_accuracy"].get<double>() << ", held-out accuracy "
              << report["heldout_accuracy"].get<double>() << '\n';
    return;
  }
  std::cout << "mean final p_true " << report["mean_final_p_true"].get<double>() << ", mean best p_true "
            << report["mean_best_p_true"].get<double>() << '\n';
  if (report.contains("t_checkpoints")) {
    for (const auto& row : report["t_checkpoints"]) {
      std::cout << "  T=" << row["T"].get<int>() << "  p_true " << row["p_true"].get<double>() << '\n';
    }
  }
  if (report.contains("recovery") && report["recovery"]["applicable"].get<bool>()) {
    std::cout << "recovery rate " << report["recovery"]["recovery_rate"].get<double>() << " (excluded fraction "
              << report["recovery"]["excluded_fraction"].get<double>() << ")\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial examination of classifiers and analytic targets"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  Overrides o;
  std::vector<std::string> trace_files;
  app.add_option("--config", o.config, "Experiment config JSON (or a manifest.json from a previous run)");
  app.add_option("--seed", o.seeds, "Master seed(s), comma separated")->delimiter(',');
  app.add_option("--T", o.T, "Examination length");
  app.add_option("--t-checkpoints", o.t_checkpoints, "Budgets to tabulate, comma separated (0 = random baseline)")
      ->delimiter(',');
  app.add_option("--examiner", o.examiner, "rl, bo or random")->check(CLI::IsMember({"rl", "bo", "random"}));
  app.add_option("--m", o.m, "Training images per instance");
  app.add_option("--out", o.out, "Output directory (must exist)");
  app.add_flag("--dump-images", o.dump_images, "Write PGM renders of each run's best scenario");
  app.add_option("--checkpoint", o.checkpoint, "Classifier checkpoint (default <out>/checkpoint.json)");
  app.add_option("--landscape", o.landscape, "Examine an analytic landscape (suite name or JSON path)");
  app.add_option("--snapshot-every", o.snapshot_every, "Write examiner state (policy or GP) every N steps");
  app.add_option("--mode", o.mode, "Metric mode for T-checkpoints: best or final")
      ->check(CLI::IsMember({"best", "final"}));

  app.add_subcommand("train", "Train a shape classifier; writes checkpoint.json and metrics.json");
  app.add_subcommand("examine", "Examine every instance for every seed; writes traces and a report");
  app.add_subcommand("weakness-study", "Examine a restricted-training classifier and report recovery rates");
  app.add_subcommand("strength", "Search for the easiest scenarios (minimum loss)");
  CLI::App* report = app.add_subcommand("report", "Rebuild CSV/JSON reports from trace files");
  report->add_option("traces", trace_files, "Trace JSONL files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const std::string command = app.get_subcommands().front()->get_name();
    const advex::ExperimentConfig config = resolve(o);
    nlohmann::json result;
    if (command == "train") result = advex::cmd_train(config);
    else if (command == "examine") result = advex::cmd_examine(config);
    else if (command == "weakness-study") result = advex::cmd_weakness_study(config);
    else if (command == "strength") result = advex::cmd_strength(config);
    else result = advex::cmd_report(trace_files, config);
    summarize(result);
    return 0;
  } catch (const advex::InvalidConfig& e) {
    std::cerr << "examiner: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "examiner: " << e.what() << '\n';
    return 1;
  }
}
