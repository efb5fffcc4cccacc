#include "advex/rl_examiner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace advex {

void RlConfig::validate(Eigen::Index factor_count) const {
  if (embed_dim < 1 || hidden_dim < 1) throw InvalidConfig("rl: dimensions must be positive");
  if (batch_size < 1) throw InvalidConfig("rl: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidConfig("rl: learning_rate must be positive");
  if (bins && *bins < 2) throw InvalidConfig("rl: bins must be >= 2");
  if (!(init_scale >= 0.0)) throw InvalidConfig("rl: init_scale must be >= 0");
  if (!factor_order.empty()) {
    if (static_cast<Eigen::Index>(factor_order.size()) != factor_count) {
      throw InvalidConfig("rl: factor_order has " + std::to_string(factor_order.size()) +
                          " entries for " + std::to_string(factor_count) + " factors");
    }
    permute_factor_order(*this, factor_order);
  }
}

std::vector<int> RlConfig::order_for(Eigen::Index factor_count) const {
  if (!factor_order.empty()) return factor_order;
  std::vector<int> order(static_cast<size_t>(factor_count));
  std::iota(order.begin(), order.end(), 0);
  return order;
}

void to_json(nlohmann::json& j, const RlConfig& c) {
  j = {{"embed_dim", c.embed_dim},
       {"hidden_dim", c.hidden_dim},
       {"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"baseline", c.baseline == Baseline::BatchMean ? "batch-mean" : "none"},
       {"factor_order", c.factor_order},
       {"init_scale", c.init_scale}};
  j["bins"] = c.bins ? nlohmann::json(*c.bins) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, RlConfig& c) {
  try {
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.init_scale = j.value("init_scale", c.init_scale);
    if (j.contains("bins") && !j.at("bins").is_null()) c.bins = j.at("bins").get<int>();
    if (j.contains("factor_order")) c.factor_order = j.at("factor_order").get<std::vector<int>>();
    const std::string baseline = j.value("baseline", std::string("batch-mean"));
    if (baseline == "batch-mean") {
      c.baseline = Baseline::BatchMean;
    } else if (baseline == "none") {
      c.baseline = Baseline::None;
    } else {
      throw InvalidConfig("rl: baseline must be 'batch-mean' or 'none'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("rl config: ") + e.what());
  }
}

RlConfig permute_factor_order(RlConfig config, std::vector<int> order) {
  std::vector<int> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != static_cast<int>(i)) {
      throw InvalidConfig("factor order is not a permutation of 0.." +
                          std::to_string(static_cast<int>(order.size()) - 1));
    }
  }
  if (order.empty()) throw InvalidConfig("factor order must be non-empty");
  config.factor_order = std::move(order);
  return config;
}

// ---------------------------------------------------------------------------

PolicyParams::PolicyParams(int embed_dim, int hidden_dim, std::vector<int> step_bins)
    : embed_(embed_dim), hidden_(hidden_dim), step_bins_(std::move(step_bins)) {
  if (embed_ < 1 || hidden_ < 1 || step_bins_.empty()) {
    throw std::invalid_argument("PolicyParams: bad shape");
  }
  Eigen::Index offset = 0;
  auto take = [&offset](std::string name, Eigen::Index rows, Eigen::Index cols) {
    Block b{std::move(name), offset, rows, cols};
    offset += rows * cols;
    return b;
  };
  lstm_w_ = take("lstm.weight", 4 * hidden_, embed_ + hidden_);
  lstm_b_ = take("lstm.bias", 4 * hidden_, 1);
  h0_ = take("init.hidden", hidden_, 1);
  c0_ = take("init.cell", hidden_, 1);
  for (int k = 0; k < steps(); ++k) {
    if (bins(k) < 2) throw std::invalid_argument("PolicyParams: step needs >= 2 bins");
    const std::string key = std::to_string(k);
    embed_blocks_.push_back(take("embed." + key, bins(k), embed_));
    head_w_.push_back(take("head." + key + ".weight", bins(k), hidden_));
    head_b_.push_back(take("head." + key + ".bias", bins(k), 1));
  }
  flat_ = Vector::Zero(offset);
}

void PolicyParams::initialize(Rng& rng, double scale) {
  flat_.setZero();
  auto fill = [&](const Block& b) {
    for (Eigen::Index i = 0; i < b.size(); ++i) flat_[b.offset + i] = rng.uniform(-scale, scale);
  };
  fill(lstm_w_);
  for (int k = 0; k < steps(); ++k) {
    fill(embed_blocks_[static_cast<size_t>(k)]);
    fill(head_w_[static_cast<size_t>(k)]);
  }
}

std::vector<PolicyParams::Block> PolicyParams::blocks() const {
  std::vector<Block> out{lstm_w_, lstm_b_, h0_, c0_};
  for (int k = 0; k < steps(); ++k) {
    out.push_back(embed_blocks_[static_cast<size_t>(k)]);
    out.push_back(head_w_[static_cast<size_t>(k)]);
    out.push_back(head_b_[static_cast<size_t>(k)]);
  }
  return out;
}

nlohmann::json PolicyParams::to_json() const {
  nlohmann::json tensors = nlohmann::json::object();
  for (const Block& b : blocks()) {
    tensors[b.name] = {{"shape", {b.rows, b.cols}},
                       {"data", std::vector<double>(flat_.data() + b.offset,
                                                    flat_.data() + b.offset + b.size())}};
  }
  return {{"embed_dim", embed_}, {"hidden_dim", hidden_}, {"step_bins", step_bins_},
          {"tensors", tensors}};
}

PolicyParams PolicyParams::from_json(const nlohmann::json& j) {
  PolicyParams p(j.at("embed_dim").get<int>(), j.at("hidden_dim").get<int>(),
                 j.at("step_bins").get<std::vector<int>>());
  const nlohmann::json& tensors = j.at("tensors");
  for (const Block& b : p.blocks()) {
    const auto data = tensors.at(b.name).at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != b.size()) {
      throw InvalidConfig("policy checkpoint: tensor '" + b.name + "' has wrong size");
    }
    std::copy(data.begin(), data.end(), p.flat_.data() + b.offset);
  }
  return p;
}

// ---------------------------------------------------------------------------

double Rollout::log_prob() const { return std::accumulate(log_probs.begin(), log_probs.end(), 0.0); }

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct StepCache {
  Vector input;   // [x; h_prev]
  Vector c_prev;
  Vector i, f, o, g;
  Vector c, tanh_c, h;
  Vector probs;
};

/// One LSTM cell step from (h_prev, c_prev) on input x.
void lstm_step(const PolicyParams& p, const Vector& x, const Vector& h_prev,
               const Vector& c_prev, StepCache& cache) {
  const int H = p.hidden_dim();
  cache.input.resize(x.size() + h_prev.size());
  cache.input << x, h_prev;
  cache.c_prev = c_prev;
  const Vector z = p.lstm_weight() * cache.input + p.lstm_bias();
  cache.i = z.segment(0, H).unaryExpr(&sigmoid);
  cache.f = z.segment(H, H).unaryExpr(&sigmoid);
  cache.o = z.segment(2 * H, H).unaryExpr(&sigmoid);
  cache.g = z.segment(3 * H, H).array().tanh();
  cache.c = cache.f.cwiseProduct(c_prev) + cache.i.cwiseProduct(cache.g);
  cache.tanh_c = cache.c.array().tanh();
  cache.h = cache.o.cwiseProduct(cache.tanh_c);
}

/// Runs the policy. With `sample`, draws actions into `actions`; otherwise
/// follows the given actions (teacher forcing).
std::vector<StepCache> forward(const PolicyParams& p, std::vector<int>& actions, Rng* sample) {
  const int steps = p.steps();
  std::vector<StepCache> caches(static_cast<size_t>(steps));
  Vector x = Vector::Zero(p.embed_dim());
  Vector h = p.init_hidden();
  Vector c = p.init_cell();
  if (sample) actions.assign(static_cast<size_t>(steps), 0);
  for (int k = 0; k < steps; ++k) {
    StepCache& cache = caches[static_cast<size_t>(k)];
    lstm_step(p, x, h, c, cache);
    cache.probs = softmax(p.head_weight(k) * cache.h + p.head_bias(k));
    int& a = actions[static_cast<size_t>(k)];
    if (sample) a = sample->categorical(cache.probs);
    if (a < 0 || a >= p.bins(k)) throw std::out_of_range("policy: action outside bins");
    x = p.embedding(k).row(a).transpose();
    h = cache.h;
    c = cache.c;
  }
  return caches;
}

void check_actions(const PolicyParams& p, std::span<const int> actions) {
  if (static_cast<int>(actions.size()) != p.steps()) {
    throw std::invalid_argument("policy: action count does not match step count");
  }
}

}  // namespace

std::vector<Vector> step_distributions(const PolicyParams& params, std::span<const int> actions) {
  check_actions(params, actions);
  std::vector<int> a(actions.begin(), actions.end());
  std::vector<Vector> out;
  for (StepCache& cache : forward(params, a, nullptr)) out.push_back(std::move(cache.probs));
  return out;
}

Rollout sample_rollout(const PolicyParams& params, Rng& rng) {
  Rollout r;
  const auto caches = forward(params, r.bin_indices, &rng);
  for (size_t k = 0; k < caches.size(); ++k) {
    r.log_probs.push_back(std::log(caches[k].probs[r.bin_indices[k]]));
  }
  return r;
}

Scenario rollout_scenario(const Rollout& rollout, const ScenarioSpace& space,
                          std::span<const int> order, std::optional<int> bins_override) {
  if (static_cast<Eigen::Index>(order.size()) != space.size() ||
      rollout.bin_indices.size() != order.size()) {
    throw std::invalid_argument("rollout_scenario: order/rollout/space size mismatch");
  }
  Scenario s(space.size());
  for (size_t k = 0; k < order.size(); ++k) {
    Factor f = space.factor(order[k]);
    if (bins_override) f.bins = *bins_override;
    s[order[k]] = bin_to_value(f, rollout.bin_indices[k]);
  }
  return s;
}

std::pair<Scenario, Rollout> sample_scenario(const PolicyParams& params,
                                             const ScenarioSpace& space,
                                             std::span<const int> order,
                                             std::optional<int> bins_override, Rng& rng) {
  Rollout r = sample_rollout(params, rng);
  Scenario s = rollout_scenario(r, space, order, bins_override);
  return {std::move(s), std::move(r)};
}

double sequence_log_prob(const PolicyParams& params, std::span<const int> actions) {
  check_actions(params, actions);
  std::vector<int> a(actions.begin(), actions.end());
  const auto caches = forward(params, a, nullptr);
  double total = 0.0;
  for (size_t k = 0; k < caches.size(); ++k) total += std::log(caches[k].probs[a[k]]);
  return total;
}

void accumulate_log_prob_gradient(const PolicyParams& params, std::span<const int> actions,
                                  double weight, Vector& grad) {
  check_actions(params, actions);
  if (grad.size() != params.flat().size()) grad = Vector::Zero(params.flat().size());
  std::vector<int> a(actions.begin(), actions.end());
  const auto caches = forward(params, a, nullptr);

  // Gradient views share the parameter layout.
  PolicyParams g = params;
  g.flat() = Vector::Zero(params.flat().size());

  const int H = params.hidden_dim();
  const int E = params.embed_dim();
  Vector dh_next = Vector::Zero(H);
  Vector dc_next = Vector::Zero(H);
  Vector dz(4 * H);

  for (int k = params.steps() - 1; k >= 0; --k) {
    const StepCache& s = caches[static_cast<size_t>(k)];
    Vector dlogits = -weight * s.probs;
    dlogits[a[static_cast<size_t>(k)]] += weight;

    g.head_weight(k).noalias() += dlogits * s.h.transpose();
    g.head_bias(k) += dlogits;

    const Vector dh = params.head_weight(k).transpose() * dlogits + dh_next;
    const Vector d_o = dh.cwiseProduct(s.tanh_c);
    const Vector dc = dh.cwiseProduct(s.o).cwiseProduct(
                          (1.0 - s.tanh_c.array().square()).matrix()) + dc_next;
    const Vector di = dc.cwiseProduct(s.g);
    const Vector dg = dc.cwiseProduct(s.i);
    const Vector df = dc.cwiseProduct(s.c_prev);

    dz.segment(0, H) = di.array() * s.i.array() * (1.0 - s.i.array());
    dz.segment(H, H) = df.array() * s.f.array() * (1.0 - s.f.array());
    dz.segment(2 * H, H) = d_o.array() * s.o.array() * (1.0 - s.o.array());
    dz.segment(3 * H, H) = dg.array() * (1.0 - s.g.array().square());

    g.lstm_weight().noalias() += dz * s.input.transpose();
    g.lstm_bias() += dz;

    const Vector dinput = params.lstm_weight().transpose() * dz;
    if (k > 0) {
      g.embedding(k - 1).row(a[static_cast<size_t>(k - 1)]) += dinput.head(E).transpose();
    }
    dh_next = dinput.tail(H);
    dc_next = dc.cwiseProduct(s.f);
  }
  g.init_hidden() += dh_next;
  g.init_cell() += dc_next;
  grad += g.flat();
}

std::vector<double> advantages(std::span<const Rollout> batch, Baseline baseline) {
  double mean = 0.0;
  if (baseline == Baseline::BatchMean && !batch.empty()) {
    for (const Rollout& r : batch) mean += r.reward;
    mean /= static_cast<double>(batch.size());
  }
  std::vector<double> adv;
  adv.reserve(batch.size());
  for (const Rollout& r : batch) adv.push_back(r.reward - mean);
  return adv;
}

Vector policy_gradient(const PolicyParams& params, std::span<const Rollout> batch,
                       Baseline baseline) {
  Vector grad = Vector::Zero(params.flat().size());
  if (batch.empty()) return grad;
  const std::vector<double> adv = advantages(batch, baseline);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (size_t b = 0; b < batch.size(); ++b) {
    if (adv[b] == 0.0) continue;
    accumulate_log_prob_gradient(params, batch[b].bin_indices, scale * adv[b], grad);
  }
  return grad;
}

void policy_gradient_update(PolicyParams& params, std::span<const Rollout> batch,
                            AdamState& adam, const RlConfig& config) {
  if (static_cast<int>(batch.size()) != config.batch_size) {
    throw InvalidConfig("policy update needs a batch of " + std::to_string(config.batch_size) +
                        " rollouts, got " + std::to_string(batch.size()));
  }
  // Adam descends, so feed it the negated ascent direction.
  const Vector ascent = policy_gradient(params, batch, config.baseline);
  adam_step(params.flat(), -ascent, adam);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<int> step_bins_for(const ScenarioSpace& space, const RlConfig& config,
                               const std::vector<int>& order) {
  std::vector<int> bins;
  for (int factor : order) bins.push_back(config.bins.value_or(space.factor(factor).bins));
  return bins;
}

}  // namespace

RlExaminer::RlExaminer(ScenarioSpace space, RlConfig config, Rng rng)
    : space_(std::move(space)), config_(std::move(config)), rng_(rng) {
  config_.validate(space_.size());
  order_ = config_.order_for(space_.size());
  params_ = PolicyParams(config_.embed_dim, config_.hidden_dim, step_bins_for(space_, config_, order_));
  Rng init = rng_.split(0x1417);
  params_.initialize(init, config_.init_scale);
  adam_ = AdamState::zeros(params_.flat().size(), config_.learning_rate);
  buffer_.reserve(static_cast<size_t>(config_.batch_size));
}

Scenario RlExaminer::propose() {
  auto [scenario, rollout] = sample_scenario(params_, space_, order_, config_.bins, rng_);
  pending_ = std::move(rollout);
  return scenario;
}

void RlExaminer::observe(const Scenario&, double loss) {
  pending_.reward = loss;
  buffer_.push_back(std::move(pending_));
  pending_ = {};
  if (static_cast<int>(buffer_.size()) == config_.batch_size) {
    policy_gradient_update(params_, buffer_, adam_, config_);
    buffer_.clear();
    ++updates_;
  }
}

nlohmann::json RlExaminer::checkpoint() const {
  return {{"config", config_},
          {"order", order_},
          {"updates", updates_},
          {"adam_steps", adam_.step_count},
          {"params", params_.to_json()}};
}

ExaminerFactory rl_examiner_factory(RlConfig config) {
  return [config](const ScenarioSpace& space, Rng rng) {
    return std::make_unique<RlExaminer>(space, config, rng);
  };
}

}  // namespace advex
