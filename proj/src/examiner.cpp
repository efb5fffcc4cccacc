#include "advex/examiner.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

namespace advex {

std::string to_string(Direction d) { return d == Direction::Weakness ? "weakness" : "strength"; }

Direction parse_direction(const std::string& text) {
  if (text == "weakness") return Direction::Weakness;
  if (text == "strength") return Direction::Strength;
  throw InvalidConfig("direction must be 'weakness' or 'strength', got '" + text + "'");
}

MetricMode parse_metric_mode(const std::string& text) {
  if (text == "final") return MetricMode::Final;
  if (text == "best") return MetricMode::Best;
  throw InvalidConfig("metric mode must be 'final' or 'best', got '" + text + "'");
}

Scenario Examiner::generate() {
  if (pending_) throw ProtocolError("generate() called twice without update()");
  pending_ = propose();
  return *pending_;
}

void Examiner::update(const Scenario& s, double loss) {
  if (!pending_) throw ProtocolError("update() without a preceding generate()");
  if (s.size() != pending_->size() || s != *pending_) {
    throw ProtocolError("update() must receive the most recently generated scenario");
  }
  pending_.reset();
  observe(s, loss);
}

ExaminerFactory random_examiner_factory() {
  return [](const ScenarioSpace& space, Rng rng) {
    return std::make_unique<RandomExaminer>(space, rng);
  };
}

namespace {

bool better(Direction d, double candidate, double incumbent) {
  return d == Direction::Weakness ? candidate > incumbent : candidate < incumbent;
}

}  // namespace

double ExamTrace::best_up_to(int t) const {
  if (t < 1 || t > T()) throw std::out_of_range("best_up_to: t outside [1, T]");
  double best = steps[0].loss;
  for (int i = 1; i < t; ++i) {
    if (better(direction, steps[static_cast<size_t>(i)].loss, best)) {
      best = steps[static_cast<size_t>(i)].loss;
    }
  }
  return best;
}

void ExamTrace::finalize() {
  if (steps.empty()) throw std::logic_error("ExamTrace::finalize: no steps");
  final_loss = steps.back().loss;
  size_t arg = 0;
  for (size_t i = 1; i < steps.size(); ++i) {
    if (better(direction, steps[i].loss, steps[arg].loss)) arg = i;
  }
  best_loss = steps[arg].loss;
  argbest = steps[arg].scenario;
}

ExamTrace run_examination(const TargetQuery& target, const ExaminerFactory& make_examiner,
                          const ExamOptions& options) {
  if (options.T < 1) throw InvalidConfig("examination needs T >= 1");
  const ScenarioSpace& space = target.space();
  std::unique_ptr<Examiner> examiner =
      make_examiner(space, Rng::stream(options.seed, options.stream_id));

  ExamTrace trace;
  trace.instance_id = options.instance_id;
  trace.seed = options.seed;
  trace.direction = options.direction;
  trace.steps.reserve(static_cast<size_t>(options.T));
  const double sign = options.direction == Direction::Weakness ? 1.0 : -1.0;

  for (int t = 1; t <= options.T; ++t) {
    Scenario s = examiner->generate();
    space.require_contains(s);
    const TargetQuery::Assessment a = target.assess(s);
    examiner->update(s, sign * a.loss);
    trace.steps.push_back({t, std::move(s), a.loss, a.correct});
    if (options.after_update) options.after_update(t, *examiner);
  }
  trace.finalize();
  return trace;
}

double examiner_metric(std::span<const ExamTrace> traces, MetricMode mode) {
  if (traces.empty()) throw std::invalid_argument("examiner_metric: no traces");
  const int T = traces.front().T();
  const Direction d = traces.front().direction;
  double sum = 0.0;
  for (const ExamTrace& tr : traces) {
    if (tr.T() != T || tr.direction != d) {
      throw std::invalid_argument("examiner_metric: traces differ in T or direction");
    }
    sum += mode == MetricMode::Final ? tr.final_loss : tr.best_loss;
  }
  return sum / static_cast<double>(traces.size());
}

double standard_metric(const TargetQuery& target, int n, std::uint64_t seed) {
  if (n < 1) throw InvalidConfig("standard metric needs N >= 1");
  Rng rng(seed);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += target.evaluate(target.space().sample_uniform(rng));
  return sum / n;
}

void write_trace_jsonl(std::ostream& out, const ExamTrace& trace) {
  for (const ExamStep& step : trace.steps) {
    nlohmann::json line = {
        {"instance", trace.instance_id},
        {"seed", trace.seed},
        {"t", step.t},
        {"scenario", std::vector<double>(step.scenario.begin(), step.scenario.end())},
        {"loss", step.loss}};
    if (step.correct) line["correct"] = *step.correct;
    out << line.dump() << '\n';
  }
}

std::vector<ExamTrace> read_trace_jsonl(std::istream& in, const std::string& source,
                                        Direction direction) {
  std::vector<ExamTrace> traces;
  std::string text;
  int line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    try {
      const nlohmann::json line = nlohmann::json::parse(text);
      const auto instance = line.at("instance").get<std::string>();
      const auto seed = line.value("seed", std::uint64_t{0});
      const auto values = line.at("scenario").get<std::vector<double>>();
      ExamStep step;
      step.t = line.at("t").get<int>();
      step.scenario = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
      step.loss = line.at("loss").get<double>();
      if (line.contains("correct")) step.correct = line.at("correct").get<bool>();

      if (traces.empty() || traces.back().instance_id != instance || traces.back().seed != seed) {
        ExamTrace fresh;
        fresh.instance_id = instance;
        fresh.seed = seed;
        fresh.direction = direction;
        traces.push_back(std::move(fresh));
      }
      ExamTrace& tr = traces.back();
      if (step.t != tr.T() + 1) {
        throw InvalidConfig("expected t = " + std::to_string(tr.T() + 1) + ", got " +
                            std::to_string(step.t));
      }
      tr.steps.push_back(std::move(step));
    } catch (const std::exception& e) {
      throw InvalidConfig(source + ":" + std::to_string(line_no) + ": corrupt trace line (" +
                          e.what() + ")");
    }
  }
  for (ExamTrace& tr : traces) tr.finalize();
  return traces;
}

}  // namespace advex
