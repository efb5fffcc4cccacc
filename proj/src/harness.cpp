#include "advex/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace advex {

namespace fs = std::filesystem;

namespace {

std::string mode_name(MetricMode m) { return m == MetricMode::Best ? "best" : "final"; }

// Shortest text that reads back as the same double.
std::string num(double v) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

void require_out_dir(const std::string& out) {
  std::error_code ec;
  if (!fs::is_directory(out, ec)) {
    throw InvalidConfig("cannot write to '" + out + "': output directory does not exist");
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidConfig("cannot write '" + path.string() + "'");
  return f;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream f = open_out(path);
  f << j.dump(2) << '\n';
}

void write_manifest(const ExperimentConfig& config, const std::string& command,
                    const std::vector<std::string>& artifacts) {
  nlohmann::json hashes = nlohmann::json::object();
  for (const std::string& name : artifacts) {
    hashes[name] = sha256_file((fs::path(config.out) / name).string());
  }
  write_json(fs::path(config.out) / "manifest.json",
             {{"command", command},
              {"config", config},
              {"master_seed", config.seeds.front()},
              {"artifacts", hashes}});
}

ScenarioSpace target_space(const ExperimentConfig& config) {
  return config.target_kind == "landscape" ? landscape_targets(config).front().target->space()
                                           : render_space();
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

void to_json(nlohmann::json& j, const Restriction& r) {
  j = {{"factor", r.factor}, {"lower", r.lower}, {"upper", r.upper}};
}

void from_json(const nlohmann::json& j, Restriction& r) {
  r.factor = j.at("factor").get<std::string>();
  r.lower = j.at("lower").get<double>();
  r.upper = j.at("upper").get<double>();
}

std::string ExperimentConfig::checkpoint_path() const {
  return checkpoint.empty() ? (fs::path(out) / "checkpoint.json").string() : checkpoint;
}

void ExperimentConfig::validate() const {
  if (target_kind != "shapes" && target_kind != "landscape") {
    throw InvalidConfig("target kind must be shapes or landscape; got '" + target_kind + "'");
  }
  if (examiner != "rl" && examiner != "bo" && examiner != "random") {
    throw InvalidConfig("examiner must be rl, bo or random; got '" + examiner + "'");
  }
  if (T < 1) throw InvalidConfig("T must be >= 1");
  if (seeds.empty()) throw InvalidConfig("seeds must not be empty");
  for (int c : t_checkpoints) {
    if (c < 0 || c > T) {
      throw InvalidConfig("t-checkpoint " + std::to_string(c) + " outside [0, T=" + std::to_string(T) + "]");
    }
  }
  if (standard_n < 1) throw InvalidConfig("standard_n must be >= 1");
  if (last_k < 1) throw InvalidConfig("last_k must be >= 1");
  if (snapshot_every < 0) throw InvalidConfig("snapshot_every must be >= 0");
  if (per_class < 0) throw InvalidConfig("per_class must be >= 0");
  if (heldout_count < 1) throw InvalidConfig("heldout_count must be >= 1");
  if (training.m < 1) throw InvalidConfig("m must be >= 1");
  if (training.epochs < 0) throw InvalidConfig("epochs must be >= 0");
  ucb.validate();
  const std::vector<ShapeInstance> all = canonical_instances();
  for (const std::string& id : instances) {
    if (std::none_of(all.begin(), all.end(), [&](const ShapeInstance& z) { return z.instance_id == id; })) {
      throw InvalidConfig("unknown instance '" + id + "'");
    }
  }
  if (restriction) restrict_training_space(render_space(), restriction->factor, restriction->lower, restriction->upper);
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  nlohmann::json train = c.training;
  train.erase("seed");
  train["per_class"] = c.per_class;
  train["heldout_count"] = c.heldout_count;
  if (c.restriction) train["restrict"] = *c.restriction;
  j = {{"target", {{"kind", c.target_kind},
                   {"checkpoint", c.checkpoint},
                   {"landscape", c.landscape},
                   {"instances", c.instances}}},
       {"examiner", {{"kind", c.examiner}, {"rl", c.rl}, {"kernel", c.kernel}, {"ucb", c.ucb}}},
       {"T", c.T},
       {"t_checkpoints", c.t_checkpoints},
       {"seeds", c.seeds},
       {"direction", to_string(c.direction)},
       {"mode", mode_name(c.mode)},
       {"standard_n", c.standard_n},
       {"last_k", c.last_k},
       {"train", train},
       {"out", c.out},
       {"dump_images", c.dump_images},
       {"snapshot_every", c.snapshot_every}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  try {
    if (j.contains("target")) {
      const auto& t = j.at("target");
      c.target_kind = t.value("kind", c.target_kind);
      c.checkpoint = t.value("checkpoint", c.checkpoint);
      c.landscape = t.value("landscape", c.landscape);
      c.instances = t.value("instances", c.instances);
    }
    if (j.contains("examiner")) {
      const auto& e = j.at("examiner");
      c.examiner = e.value("kind", c.examiner);
      if (e.contains("rl")) c.rl = e.at("rl").get<RlConfig>();
      if (e.contains("kernel")) c.kernel = e.at("kernel").get<KernelConfig>();
      if (e.contains("ucb")) c.ucb = e.at("ucb").get<UcbConfig>();
    }
    c.T = j.value("T", c.T);
    c.t_checkpoints = j.value("t_checkpoints", c.t_checkpoints);
    c.seeds = j.value("seeds", c.seeds);
    if (j.contains("direction")) c.direction = parse_direction(j.at("direction").get<std::string>());
    if (j.contains("mode")) c.mode = parse_metric_mode(j.at("mode").get<std::string>());
    c.standard_n = j.value("standard_n", c.standard_n);
    c.last_k = j.value("last_k", c.last_k);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.training = t.get<TrainingOptions>();
      c.per_class = t.value("per_class", c.per_class);
      c.heldout_count = t.value("heldout_count", c.heldout_count);
      if (t.contains("restrict") && !t.at("restrict").is_null()) c.restriction = t.at("restrict").get<Restriction>();
    }
    c.out = j.value("out", c.out);
    c.dump_images = j.value("dump_images", c.dump_images);
    c.snapshot_every = j.value("snapshot_every", c.snapshot_every);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidConfig("cannot read config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig("config '" + path + "': " + e.what());
  }
  if (j.contains("config") && j.contains("artifacts")) j = j.at("config");
  return j.get<ExperimentConfig>();
}

// ---------------------------------------------------------------------------
// training

TrainOutcome train_target(const ExperimentConfig& config) {
  config.validate();
  TrainingOptions options = config.training;
  options.seed = config.seeds.front();
  ScenarioSpace space = render_space();
  if (config.restriction) {
    space = restrict_training_space(space, config.restriction->factor, config.restriction->lower,
                                    config.restriction->upper);
  }
  std::vector<ShapeInstance> instances =
      config.per_class > 0 ? training_instances(config.per_class, options.seed) : canonical_instances();
  TrainingResult result = train_classifier(instances, space, options);
  const std::vector<ShapeInstance> canonical = canonical_instances();
  const double heldout = heldout_accuracy(result.classifier, canonical, render_space(),
                                          config.heldout_count, options.seed + 1);
  return {std::move(result), std::move(instances), std::move(space), heldout};
}

nlohmann::json checkpoint_json(const TrainOutcome& outcome, const ExperimentConfig& config) {
  TrainingOptions options = config.training;
  options.seed = config.seeds.front();
  nlohmann::json instances = nlohmann::json::array();
  for (const ShapeInstance& z : outcome.instances) {
    instances.push_back({{"id", z.instance_id}, {"class", to_string(z.shape)}, {"base_size", z.base_size}});
  }
  nlohmann::json j = {{"classifier", outcome.result.classifier.to_json()},
                      {"training", options},
                      {"training_space", outcome.training_space},
                      {"instances", instances},
                      {"restriction", nullptr}};
  if (config.restriction) j["restriction"] = *config.restriction;
  return j;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidConfig("cannot read checkpoint '" + path + "'");
  try {
    const nlohmann::json j = nlohmann::json::parse(f);
    Checkpoint c{Classifier::from_json(j.at("classifier")), std::nullopt};
    if (j.contains("restriction") && !j.at("restriction").is_null()) {
      c.restriction = j.at("restriction").get<Restriction>();
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig("checkpoint '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// examination

std::vector<NamedTarget> shape_targets(std::shared_ptr<const Classifier> classifier,
                                       const ExperimentConfig& config) {
  std::vector<NamedTarget> out;
  for (const ShapeInstance& z : canonical_instances()) {
    if (!config.instances.empty() &&
        std::find(config.instances.begin(), config.instances.end(), z.instance_id) == config.instances.end()) {
      continue;
    }
    // The aliasing constructor keeps the classifier alive with the target.
    struct Held {
      std::shared_ptr<const Classifier> classifier;
      ShapeTarget target;
    };
    auto held = std::make_shared<Held>(Held{classifier, ShapeTarget(*classifier, z)});
    out.push_back({z.instance_id, to_string(z.shape), std::shared_ptr<const TargetQuery>(held, &held->target)});
  }
  return out;
}

std::vector<NamedTarget> landscape_targets(const ExperimentConfig& config) {
  std::shared_ptr<AnalyticLandscape> landscape;
  if (config.landscape.ends_with(".json")) {
    std::ifstream f(config.landscape);
    if (!f) throw InvalidConfig("cannot read landscape '" + config.landscape + "'");
    try {
      landscape = std::make_shared<AnalyticLandscape>(AnalyticLandscape::from_json(nlohmann::json::parse(f)));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidConfig("landscape '" + config.landscape + "': " + e.what());
    }
  } else {
    landscape = std::make_shared<AnalyticLandscape>(landscape_by_name(config.landscape));
  }
  return {{landscape->name(), landscape->name(), landscape}};
}

ExaminerFactory make_examiner_factory(const ExperimentConfig& config, const ScenarioSpace& space) {
  if (config.examiner == "rl") {
    config.rl.validate(space.size());
    return rl_examiner_factory(config.rl);
  }
  if (config.examiner == "bo") {
    config.ucb.validate();
    return bo_examiner_factory(config.kernel, config.ucb);
  }
  if (config.examiner == "random") return random_examiner_factory();
  throw InvalidConfig("examiner must be rl, bo or random; got '" + config.examiner + "'");
}

Examination examine(const std::vector<NamedTarget>& targets, const ExperimentConfig& config) {
  config.validate();
  if (targets.empty()) throw InvalidConfig("no targets to examine");
  std::vector<ExaminerFactory> factories;
  for (const NamedTarget& nt : targets) factories.push_back(make_examiner_factory(config, nt.target->space()));

  Examination exam;
  for (size_t i = 0; i < targets.size(); ++i) {
    for (std::uint64_t seed : config.seeds) {
      ExamOptions options;
      options.T = config.T;
      options.direction = config.direction;
      options.seed = seed;
      options.stream_id = 100 + i;
      options.instance_id = targets[i].instance_id;
      if (config.snapshot_every > 0) {
        const fs::path dir = fs::path(config.out) / "snapshots";
        fs::create_directories(dir);
        const std::string stem = targets[i].instance_id + "_seed" + std::to_string(seed) + "_t";
        options.after_update = [&config, dir, stem](int t, const Examiner& examiner) {
          if (t % config.snapshot_every != 0 && t != config.T) return;
          write_json(dir / (stem + std::to_string(t) + ".json"), examiner_snapshot(examiner));
        };
      }
      exam.traces.push_back(run_examination(*targets[i].target, factories[i], options));
      exam.groups.push_back(targets[i].group);
      exam.standard_loss.push_back(
          standard_metric(*targets[i].target, config.standard_n, Rng::stream(seed, 900 + i).next()));
    }
  }
  return exam;
}

nlohmann::json examiner_snapshot(const Examiner& examiner) {
  if (const auto* rl = dynamic_cast<const RlExaminer*>(&examiner)) {
    return {{"examiner", "rl"}, {"updates_applied", rl->updates_applied()}, {"state", rl->checkpoint()}};
  }
  if (const auto* bo = dynamic_cast<const BoExaminer*>(&examiner)) {
    return {{"examiner", "bo"}, {"state", bo->gp().snapshot()}};
  }
  return nullptr;
}

double recovery_rate(const ExamTrace& trace, const ScenarioSpace& space,
                     const Restriction& restriction, int last_k) {
  if (trace.steps.empty()) throw std::invalid_argument("recovery_rate: empty trace");
  const Eigen::Index idx = space.index_of(restriction.factor);
  const int k = std::min(last_k, trace.T());
  int outside = 0;
  for (int i = trace.T() - k; i < trace.T(); ++i) {
    const double v = trace.steps[static_cast<size_t>(i)].scenario[idx];
    outside += (v < restriction.lower || v > restriction.upper) ? 1 : 0;
  }
  return static_cast<double>(outside) / k;
}

double excluded_fraction(const ScenarioSpace& space, const Restriction& restriction) {
  const Factor& f = space.factor(space.index_of(restriction.factor));
  return 1.0 - (restriction.upper - restriction.lower) / f.span();
}

// ---------------------------------------------------------------------------
// reports

std::string group_of(const std::string& instance_id) {
  return instance_id.substr(0, instance_id.find('-'));
}

nlohmann::json build_report(const Examination& exam, const ExperimentConfig& config) {
  const std::vector<ExamTrace>& traces = exam.traces;
  if (traces.empty()) throw InvalidConfig("report: no traces");
  const int T = traces.front().T();
  // Landscape instances are their own group.
  auto group_at = [&](size_t i) {
    if (!exam.groups.empty()) return exam.groups[i];
    return config.target_kind == "landscape" ? traces[i].instance_id : group_of(traces[i].instance_id);
  };

  // Instances and groups in first-appearance order.
  std::vector<std::string> instance_order;
  std::map<std::string, std::vector<size_t>> by_instance;
  std::vector<std::string> group_order;
  std::map<std::string, std::vector<size_t>> by_group;
  for (size_t i = 0; i < traces.size(); ++i) {
    if (traces[i].T() != T) throw InvalidConfig("report: traces differ in length");
    const std::string& id = traces[i].instance_id;
    if (!by_instance.count(id)) instance_order.push_back(id);
    by_instance[id].push_back(i);
    const std::string g = group_at(i);
    if (!by_group.count(g)) group_order.push_back(g);
    by_group[g].push_back(i);
  }
  auto mean_over = [&](const std::vector<size_t>& idx, auto&& value) {
    double s = 0.0;
    for (size_t i : idx) s += value(traces[i]);
    return s / static_cast<double>(idx.size());
  };
  auto final_p = [](const ExamTrace& tr) { return 1.0 - tr.final_loss; };
  auto best_p = [](const ExamTrace& tr) { return 1.0 - tr.best_loss; };

  nlohmann::json instances = nlohmann::json::array();
  for (const std::string& id : instance_order) {
    nlohmann::json runs = nlohmann::json::array();
    for (size_t i : by_instance[id]) {
      const ExamTrace& tr = traces[i];
      const Scenario& last = tr.steps.back().scenario;
      runs.push_back({{"seed", tr.seed},
                      {"final_p_true", final_p(tr)},
                      {"best_p_true", best_p(tr)},
                      {"final_scenario", std::vector<double>(last.begin(), last.end())},
                      {"best_scenario", std::vector<double>(tr.argbest.begin(), tr.argbest.end())}});
    }
    instances.push_back({{"instance", id},
                         {"class", group_at(by_instance[id].front())},
                         {"runs", runs},
                         {"mean_final_p_true", mean_over(by_instance[id], final_p)},
                         {"mean_best_p_true", mean_over(by_instance[id], best_p)}});
  }

  nlohmann::json classes = nlohmann::json::array();
  for (const std::string& g : group_order) {
    classes.push_back({{"class", g},
                       {"count", by_group[g].size()},
                       {"mean_final_p_true", mean_over(by_group[g], final_p)},
                       {"mean_best_p_true", mean_over(by_group[g], best_p)}});
  }

  std::vector<double> curve(static_cast<size_t>(T), 0.0);
  for (const ExamTrace& tr : traces) {
    for (int t = 0; t < T; ++t) curve[static_cast<size_t>(t)] += tr.steps[static_cast<size_t>(t)].loss;
  }
  for (double& v : curve) v /= static_cast<double>(traces.size());

  std::vector<size_t> all(traces.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  nlohmann::json report = {
      {"examiner", config.examiner},
      {"direction", to_string(traces.front().direction)},
      {"mode", mode_name(config.mode)},
      {"T", T},
      {"seeds", config.seeds},
      {"trace_file", "traces.jsonl"},
      {"instances", instances},
      {"classes", classes},
      {"mean_final_p_true", mean_over(all, final_p)},
      {"mean_best_p_true", mean_over(all, best_p)},
      {"mean_loss_curve", curve}};

  if (!config.t_checkpoints.empty()) {
    nlohmann::json table = nlohmann::json::array();
    for (int c : config.t_checkpoints) {
      if (c > T) throw InvalidConfig("t-checkpoint " + std::to_string(c) + " exceeds trace length");
      double loss = 0.0;
      if (c == 0) {
        if (exam.standard_loss.empty()) continue;
        for (double v : exam.standard_loss) loss += v;
      } else {
        for (const ExamTrace& tr : traces) {
          loss += config.mode == MetricMode::Best ? tr.best_up_to(c) : tr.steps[static_cast<size_t>(c - 1)].loss;
        }
      }
      loss /= static_cast<double>(c == 0 ? exam.standard_loss.size() : traces.size());
      table.push_back({{"T", c}, {"p_true", 1.0 - loss}});
    }
    report["t_checkpoints"] = table;
  }
  return report;
}

void write_curve_csv(std::ostream& out, const std::vector<ExamTrace>& traces) {
  out << "instance,t,loss,p_true\n";
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ExamTrace*>> groups;
  for (const ExamTrace& tr : traces) {
    if (!groups.count(tr.instance_id)) order.push_back(tr.instance_id);
    groups[tr.instance_id].push_back(&tr);
  }
  for (const std::string& id : order) {
    const auto& g = groups[id];
    int T = g.front()->T();
    for (const ExamTrace* tr : g) T = std::min(T, tr->T());
    for (int t = 0; t < T; ++t) {
      double loss = 0.0;
      for (const ExamTrace* tr : g) loss += tr->steps[static_cast<size_t>(t)].loss;
      loss /= static_cast<double>(g.size());
      out << id << ',' << t + 1 << ',' << num(loss) << ',' << num(1.0 - loss) << '\n';
    }
  }
}

void write_seed_curve_csv(std::ostream& out, const std::vector<ExamTrace>& traces) {
  out << "instance,seed,t,loss,p_true\n";
  for (const ExamTrace& tr : traces) {
    for (const ExamStep& s : tr.steps) {
      out << tr.instance_id << ',' << tr.seed << ',' << s.t << ',' << num(s.loss) << ',' << num(1.0 - s.loss) << '\n';
    }
  }
}

void write_class_csv(std::ostream& out, const nlohmann::json& report) {
  out << "class,count,mean_final_p_true,mean_best_p_true\n";
  for (const auto& c : report.at("classes")) {
    out << c.at("class").get<std::string>() << ',' << c.at("count").get<int>() << ','
        << num(c.at("mean_final_p_true").get<double>()) << ',' << num(c.at("mean_best_p_true").get<double>())
        << '\n';
  }
}

void write_scenario_csv(std::ostream& out, const std::vector<ExamTrace>& traces,
                        const ScenarioSpace& space, int last_k) {
  out << "instance,seed,t";
  for (const Factor& f : space.factors()) out << ',' << f.name;
  out << ",loss,p_true,correct\n";
  for (const ExamTrace& tr : traces) {
    const int k = std::min(last_k, tr.T());
    for (int i = tr.T() - k; i < tr.T(); ++i) {
      const ExamStep& s = tr.steps[static_cast<size_t>(i)];
      if (s.scenario.size() != space.size()) throw InvalidConfig("scenario width does not match the space");
      out << tr.instance_id << ',' << tr.seed << ',' << s.t;
      for (double v : s.scenario) out << ',' << num(v);
      out << ',' << num(s.loss) << ',' << num(1.0 - s.loss) << ',';
      if (s.correct) out << (*s.correct ? 1 : 0);
      out << '\n';
    }
  }
}

std::string sha256_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read '" + path + "' for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf;
  while (f.read(buf.data(), buf.size()) || f.gcount() > 0) {
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<size_t>(f.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest;
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

// ---------------------------------------------------------------------------
// commands

namespace {

std::vector<NamedTarget> configured_targets(const ExperimentConfig& config, Checkpoint* checkpoint) {
  if (config.target_kind == "landscape") return landscape_targets(config);
  Checkpoint c = load_checkpoint(config.checkpoint_path());
  auto classifier = std::make_shared<const Classifier>(c.classifier);
  if (checkpoint) *checkpoint = std::move(c);
  return shape_targets(classifier, config);
}

void write_traces(const fs::path& path, const std::vector<ExamTrace>& traces) {
  std::ofstream f = open_out(path);
  for (const ExamTrace& tr : traces) write_trace_jsonl(f, tr);
}

void dump_images(const ExperimentConfig& config, const Examination& exam) {
  const fs::path dir = fs::path(config.out) / "images";
  fs::create_directories(dir);
  for (const ExamTrace& tr : exam.traces) {
    for (const ShapeInstance& z : canonical_instances()) {
      if (z.instance_id != tr.instance_id) continue;
      std::ofstream f = open_out(dir / (tr.instance_id + "_seed" + std::to_string(tr.seed) + "_best.pgm"));
      write_pgm(f, render(z, tr.argbest));
    }
  }
}

// Shared tail of examine, weakness-study and strength.
void emit_examination(const ExperimentConfig& config, const std::string& command, const Examination& exam,
                      const nlohmann::json& report) {
  const fs::path out(config.out);
  write_traces(out / "traces.jsonl", exam.traces);
  write_json(out / "report.json", report);
  {
    std::ofstream f = open_out(out / "loss_vs_t.csv");
    write_curve_csv(f, exam.traces);
  }
  {
    std::ofstream f = open_out(out / "loss_vs_t_by_seed.csv");
    write_seed_curve_csv(f, exam.traces);
  }
  {
    std::ofstream f = open_out(out / "per_class.csv");
    write_class_csv(f, report);
  }
  {
    std::ofstream f = open_out(out / "scenarios.csv");
    write_scenario_csv(f, exam.traces, target_space(config), config.last_k);
  }
  if (config.dump_images && config.target_kind == "shapes") dump_images(config, exam);
  write_manifest(config, command,
                 {"traces.jsonl", "report.json", "loss_vs_t.csv", "loss_vs_t_by_seed.csv", "per_class.csv",
                  "scenarios.csv"});
}

}  // namespace

nlohmann::json cmd_train(const ExperimentConfig& config) {
  config.validate();
  if (config.target_kind != "shapes") throw InvalidConfig("train needs a shapes target");
  require_out_dir(config.out);
  const TrainOutcome outcome = train_target(config);
  const fs::path out(config.out);
  const std::string checkpoint = config.checkpoint_path();
  write_json(checkpoint, checkpoint_json(outcome, config));
  nlohmann::json metrics = {{"train_accuracy", outcome.result.train_accuracy},
                            {"heldout_accuracy", outcome.heldout_accuracy},
                            {"heldout_count", config.heldout_count},
                            {"m", config.training.m},
                            {"epochs", config.training.epochs},
                            {"instances", outcome.instances.size()},
                            {"loss_curve", outcome.result.loss_curve}};
  write_json(out / "metrics.json", metrics);
  std::vector<std::string> artifacts{"metrics.json"};
  if (fs::path(checkpoint).parent_path() == out) artifacts.insert(artifacts.begin(), fs::path(checkpoint).filename().string());
  write_manifest(config, "train", artifacts);
  return metrics;
}

nlohmann::json cmd_examine(const ExperimentConfig& config) {
  config.validate();
  require_out_dir(config.out);
  const std::vector<NamedTarget> targets = configured_targets(config, nullptr);
  const Examination exam = examine(targets, config);
  nlohmann::json report = build_report(exam, config);
  emit_examination(config, "examine", exam, report);
  return report;
}

nlohmann::json cmd_weakness_study(const ExperimentConfig& config) {
  config.validate();
  if (config.target_kind != "shapes") throw InvalidConfig("weakness-study needs a shapes target");
  require_out_dir(config.out);
  Checkpoint checkpoint;
  const std::vector<NamedTarget> targets = configured_targets(config, &checkpoint);
  if (!checkpoint.restriction) {
    throw InvalidConfig("weakness-study: checkpoint '" + config.checkpoint_path() +
                        "' carries no training restriction");
  }
  const Restriction& r = *checkpoint.restriction;
  const Examination exam = examine(targets, config);
  nlohmann::json report = build_report(exam, config);

  const ScenarioSpace space = render_space();
  const double excluded = excluded_fraction(space, r);
  nlohmann::json recovery = {{"restriction", r}, {"last_k", config.last_k}, {"excluded_fraction", excluded}};
  if (excluded <= 0.0) {
    recovery["applicable"] = false;
    recovery["recovery_rate"] = nullptr;
  } else {
    recovery["applicable"] = true;
    nlohmann::json per = nlohmann::json::array();
    double total = 0.0;
    for (const ExamTrace& tr : exam.traces) {
      const double rate = recovery_rate(tr, space, r, config.last_k);
      total += rate;
      per.push_back({{"instance", tr.instance_id}, {"seed", tr.seed}, {"recovery_rate", rate}});
    }
    recovery["runs"] = per;
    recovery["recovery_rate"] = total / static_cast<double>(exam.traces.size());
  }
  report["recovery"] = recovery;
  emit_examination(config, "weakness-study", exam, report);
  return report;
}

nlohmann::json cmd_strength(ExperimentConfig config) {
  config.direction = Direction::Strength;
  config.validate();
  require_out_dir(config.out);
  const std::vector<NamedTarget> targets = configured_targets(config, nullptr);
  const Examination exam = examine(targets, config);
  nlohmann::json report = build_report(exam, config);
  nlohmann::json views = nlohmann::json::array();
  for (const ExamTrace& tr : exam.traces) {
    const Scenario& last = tr.steps.back().scenario;
    views.push_back({{"instance", tr.instance_id},
                     {"seed", tr.seed},
                     {"final_scenario", std::vector<double>(last.begin(), last.end())},
                     {"final_p_true", 1.0 - tr.final_loss}});
  }
  report["easiest_views"] = views;
  emit_examination(config, "strength", exam, report);
  return report;
}

nlohmann::json cmd_report(const std::vector<std::string>& trace_files, const ExperimentConfig& config) {
  if (trace_files.empty()) throw InvalidConfig("report: no trace files given");
  require_out_dir(config.out);
  Examination exam;
  for (const std::string& path : trace_files) {
    std::ifstream f(path);
    if (!f) throw InvalidConfig("cannot read trace file '" + path + "'");
    for (ExamTrace& tr : read_trace_jsonl(f, path, config.direction)) exam.traces.push_back(std::move(tr));
  }
  if (exam.traces.empty()) throw InvalidConfig("report: trace files hold no steps");
  ExperimentConfig resolved = config;
  resolved.t_checkpoints.erase(std::remove(resolved.t_checkpoints.begin(), resolved.t_checkpoints.end(), 0),
                               resolved.t_checkpoints.end());
  std::vector<std::uint64_t> seeds;
  for (const ExamTrace& tr : exam.traces) {
    if (std::find(seeds.begin(), seeds.end(), tr.seed) == seeds.end()) seeds.push_back(tr.seed);
  }
  resolved.seeds = seeds;
  nlohmann::json report = build_report(exam, resolved);
  report["examiner"] = nullptr;
  nlohmann::json sources = nlohmann::json::array();
  for (const std::string& path : trace_files) sources.push_back(fs::path(path).filename().string());
  report["trace_file"] = sources;

  const fs::path out(config.out);
  write_json(out / "report.json", report);
  {
    std::ofstream f = open_out(out / "loss_vs_t.csv");
    write_curve_csv(f, exam.traces);
  }
  {
    std::ofstream f = open_out(out / "loss_vs_t_by_seed.csv");
    write_seed_curve_csv(f, exam.traces);
  }
  {
    std::ofstream f = open_out(out / "per_class.csv");
    write_class_csv(f, report);
  }
  {
    // Factor names come from the configured target when widths agree.
    ScenarioSpace space = target_space(config);
    const Eigen::Index width = exam.traces.front().steps.front().scenario.size();
    if (space.size() != width) {
      std::vector<Factor> generic;
      for (Eigen::Index i = 0; i < width; ++i) generic.push_back({"s" + std::to_string(i), 0.0, 1.0, 100});
      space = ScenarioSpace(std::move(generic));
    }
    std::ofstream f = open_out(out / "scenarios.csv");
    write_scenario_csv(f, exam.traces, space, config.last_k);
  }
  write_manifest(resolved, "report",
                 {"report.json", "loss_vs_t.csv", "loss_vs_t_by_seed.csv", "per_class.csv", "scenarios.csv"});
  return report;
}

}  // namespace advex
