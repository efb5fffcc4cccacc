#pragma once

#include "advex/bo_examiner.hpp"
#include "advex/examiner.hpp"
#include "advex/landscape.hpp"
#include "advex/rl_examiner.hpp"
#include "advex/shapes.hpp"

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace advex {

/// Narrowed training range for one factor.
struct Restriction {
  std::string factor;
  double lower = 0.0;
  double upper = 0.0;
};

void to_json(nlohmann::json& j, const Restriction& r);
void from_json(const nlohmann::json& j, Restriction& r);

/// Everything a CLI run needs. JSON layout:
///
///   {"target":   {"kind": "shapes"|"landscape", "checkpoint": path,
///                 "landscape": name-or-path, "instances": [ids]},
///    "examiner": {"kind": "rl"|"bo"|"random", "rl": {...}, "kernel": {...},
///                 "ucb": {...}},
///    "T": 500, "t_checkpoints": [0, 100, 500], "seeds": [1, 2],
///    "direction": "weakness"|"strength", "mode": "best"|"final",
///    "standard_n": 500, "last_k": 50,
///    "train":    {"m", "epochs", "learning_rate", "hidden", "input",
///                 "standardize", "init_scale", "per_class", "heldout_count",
///                 "restrict": {"factor", "lower", "upper"}},
///    "out": dir, "dump_images": false, "snapshot_every": 0}
///
/// Every key is optional. A manifest written by a previous run is accepted
/// too; its "config" member is used.
struct ExperimentConfig {
  std::string target_kind = "shapes";
  std::string checkpoint;  // empty: <out>/checkpoint.json
  std::string landscape = "three-bump";
  std::vector<std::string> instances;  // empty: every canonical instance

  std::string examiner = "rl";
  RlConfig rl;
  KernelConfig kernel;
  UcbConfig ucb;

  int T = 500;
  std::vector<int> t_checkpoints;
  std::vector<std::uint64_t> seeds{1};
  Direction direction = Direction::Weakness;
  MetricMode mode = MetricMode::Best;
  int standard_n = 500;
  int last_k = 50;

  TrainingOptions training;  // seed is taken from seeds.front()
  int per_class = 0;         // 0: one canonical instance per class
  int heldout_count = 200;
  std::optional<Restriction> restriction;

  std::string out = "out";
  bool dump_images = false;
  int snapshot_every = 0;  // > 0: examiner state every that many steps and at T

  std::string checkpoint_path() const;
  /// Throws InvalidConfig on any inconsistent field.
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_config(const std::string& path);

// --- training -------------------------------------------------------------

struct TrainOutcome {
  TrainingResult result;
  std::vector<ShapeInstance> instances;
  ScenarioSpace training_space;
  double heldout_accuracy = 0.0;  // canonical instances, full render space
};

TrainOutcome train_target(const ExperimentConfig& config);

struct Checkpoint {
  Classifier classifier;
  std::optional<Restriction> restriction;
};

nlohmann::json checkpoint_json(const TrainOutcome& outcome, const ExperimentConfig& config);
Checkpoint load_checkpoint(const std::string& path);

// --- examination ----------------------------------------------------------

/// A target with the identifiers reports group it by.
struct NamedTarget {
  std::string instance_id;
  std::string group;  // shape class, or landscape name
  std::shared_ptr<const TargetQuery> target;
};

/// Shape targets for `config.instances` (all canonical ones when empty).
std::vector<NamedTarget> shape_targets(std::shared_ptr<const Classifier> classifier,
                                       const ExperimentConfig& config);
std::vector<NamedTarget> landscape_targets(const ExperimentConfig& config);

/// Builds the configured examiner. Throws InvalidConfig if its settings do
/// not fit `space`.
ExaminerFactory make_examiner_factory(const ExperimentConfig& config, const ScenarioSpace& space);

struct Examination {
  std::vector<ExamTrace> traces;    // target-major, then seed order
  std::vector<std::string> groups;  // one per trace
  std::vector<double> standard_loss;  // one per trace: Monte Carlo mean loss
};

/// Runs every (target, seed) cell. Cell (i, seed) uses random stream
/// 100 + i of master seed `seed`, so prefixes of a long run equal short runs.
/// With config.snapshot_every > 0, examiner states go to
/// <out>/snapshots/<instance>_seed<seed>_t<t>.json.
Examination examine(const std::vector<NamedTarget>& targets, const ExperimentConfig& config);

/// Policy parameters (RL) or the observed set W and kernel (BO); null for
/// stateless examiners.
nlohmann::json examiner_snapshot(const Examiner& examiner);

/// Fraction of the last `last_k` scenarios whose restricted factor lies
/// outside the training range.
double recovery_rate(const ExamTrace& trace, const ScenarioSpace& space,
                     const Restriction& restriction, int last_k);

/// Share of the examination range of the factor that training excluded.
double excluded_fraction(const ScenarioSpace& space, const Restriction& restriction);

// --- reports --------------------------------------------------------------

/// Group key for traces read back from disk: the instance id up to its
/// first '-'.
std::string group_of(const std::string& instance_id);

/// Per-instance and per-group final/best p_true (p_true = 1 - loss), the
/// mean loss curve, and the T-checkpoint table when requested.
nlohmann::json build_report(const Examination& exam, const ExperimentConfig& config);

/// Mean over traces of each instance: header "instance,t,loss,p_true".
void write_curve_csv(std::ostream& out, const std::vector<ExamTrace>& traces);
/// One row per step: header "instance,seed,t,loss,p_true".
void write_seed_curve_csv(std::ostream& out, const std::vector<ExamTrace>& traces);
/// Header "class,count,mean_final_p_true,mean_best_p_true".
void write_class_csv(std::ostream& out, const nlohmann::json& report);
/// Last `last_k` scenarios per trace plus the correctness flag (empty when
/// unknown).
void write_scenario_csv(std::ostream& out, const std::vector<ExamTrace>& traces,
                        const ScenarioSpace& space, int last_k);

std::string sha256_file(const std::string& path);

// --- commands -------------------------------------------------------------
// Each writes its artifacts plus manifest.json into config.out, which must
// exist.

nlohmann::json cmd_train(const ExperimentConfig& config);
nlohmann::json cmd_examine(const ExperimentConfig& config);
nlohmann::json cmd_weakness_study(const ExperimentConfig& config);
nlohmann::json cmd_strength(ExperimentConfig config);
nlohmann::json cmd_report(const std::vector<std::string>& trace_files, const ExperimentConfig& config);

}  // namespace advex
