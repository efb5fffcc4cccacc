#pragma once

#include "advex/scenario.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace advex {

enum class Direction { Weakness, Strength };

std::string to_string(Direction d);
Direction parse_direction(const std::string& text);

/// Black-box loss over a scenario space. Implementations must be
/// deterministic and safe for concurrent const calls.
class TargetQuery {
 public:
  virtual ~TargetQuery() = default;
  virtual const ScenarioSpace& space() const = 0;
  virtual double evaluate(const Scenario& s) const = 0;

  struct Assessment {
    double loss = 0.0;
    std::optional<bool> correct;
  };
  /// Loss plus, for classifier targets, whether the prediction was right.
  virtual Assessment assess(const Scenario& s) const { return {evaluate(s), std::nullopt}; }
};

/// Sequential examiner. generate() and update() strictly alternate and
/// update() must receive the scenario generate() just returned. The base
/// class enforces the protocol; subclasses implement the two hooks.
///
/// Examiners always maximize what update() feeds them. Direction is handled
/// by the examination loop.
class Examiner {
 public:
  virtual ~Examiner() = default;

  Scenario generate();
  void update(const Scenario& s, double loss);

  bool awaiting_update() const { return pending_.has_value(); }

 protected:
  virtual Scenario propose() = 0;
  virtual void observe(const Scenario& s, double loss) = 0;

 private:
  std::optional<Scenario> pending_;
};

/// Builds a fresh examiner for a space from its private random stream.
using ExaminerFactory = std::function<std::unique_ptr<Examiner>(const ScenarioSpace&, Rng)>;

/// Uniform sampling; the standard-protocol baseline.
class RandomExaminer final : public Examiner {
 public:
  RandomExaminer(ScenarioSpace space, Rng rng) : space_(std::move(space)), rng_(rng) {}

 protected:
  Scenario propose() override { return space_.sample_uniform(rng_); }
  void observe(const Scenario&, double) override {}

 private:
  ScenarioSpace space_;
  Rng rng_;
};

ExaminerFactory random_examiner_factory();

struct ExamStep {
  int t = 0;
  Scenario scenario;
  double loss = 0.0;
  std::optional<bool> correct;  // classifier targets only
};

struct ExamTrace {
  std::string instance_id;
  std::uint64_t seed = 0;
  Direction direction = Direction::Weakness;
  std::vector<ExamStep> steps;
  double final_loss = 0.0;
  double best_loss = 0.0;  // max over steps (min in strength mode)
  Scenario argbest;

  int T() const { return static_cast<int>(steps.size()); }
  /// Best loss over steps 1..t.
  double best_up_to(int t) const;
  /// Recomputes final/best/argbest from steps.
  void finalize();
};

struct ExamOptions {
  int T = 500;
  Direction direction = Direction::Weakness;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  std::string instance_id = "0";
  /// Called after every update with the step number; for snapshots.
  std::function<void(int t, const Examiner& examiner)> after_update;
};

/// The sequential examination loop: T rounds of generate, evaluate, update.
/// Out-of-bounds proposals are a hard ContractViolation. In strength mode
/// the examiner is fed the negated loss; the trace keeps the raw loss.
ExamTrace run_examination(const TargetQuery& target, const ExaminerFactory& make_examiner,
                          const ExamOptions& options);

enum class MetricMode { Final, Best };

MetricMode parse_metric_mode(const std::string& text);

/// Mean over traces of the final loss (mode Final) or the best loss (mode Best).
double examiner_metric(std::span<const ExamTrace> traces, MetricMode mode);

/// Monte Carlo average-case loss over n uniform scenarios.
double standard_metric(const TargetQuery& target, int n, std::uint64_t seed);

/// One JSON object per step: {"instance", "seed", "t", "scenario", "loss"},
/// plus "correct" when the step carries a classification outcome.
void write_trace_jsonl(std::ostream& out, const ExamTrace& trace);

/// Parses JSONL trace lines, grouping consecutive lines by (instance, seed).
/// Throws InvalidConfig naming `source` and the 1-based line number on a
/// corrupt line.
std::vector<ExamTrace> read_trace_jsonl(std::istream& in, const std::string& source,
                                        Direction direction = Direction::Weakness);

}  // namespace advex
