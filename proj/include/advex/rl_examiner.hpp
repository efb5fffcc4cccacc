#pragma once

#include "advex/examiner.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace advex {

enum class Baseline { BatchMean, None };

struct RlConfig {
  int embed_dim = 30;
  int hidden_dim = 30;
  double learning_rate = 0.05;
  int batch_size = 32;
  std::optional<int> bins;        // overrides every factor's own bin count
  Baseline baseline = Baseline::BatchMean;
  std::vector<int> factor_order;  // sampling order; empty means identity
  double init_scale = 0.08;       // weights ~ U[-init_scale, init_scale]

  void validate(Eigen::Index factor_count) const;
  /// Effective sampling order for a space with `factor_count` factors.
  std::vector<int> order_for(Eigen::Index factor_count) const;
};

void to_json(nlohmann::json& j, const RlConfig& c);
void from_json(const nlohmann::json& j, RlConfig& c);

/// Returns a copy of `config` that samples factors in `order`. Emitted
/// scenarios stay in canonical order. Throws InvalidConfig unless `order`
/// is a permutation of 0..n-1.
RlConfig permute_factor_order(RlConfig config, std::vector<int> order);

/// All policy weights in one flat vector, viewed per tensor:
///
///   lstm.weight   4H x (E+H)  gate rows ordered input, forget, output, candidate
///   lstm.bias     4H
///   init.hidden   H
///   init.cell     H
///   embed.<k>     bins_k x E  embedding of the bin sampled at step k
///   head.<k>.weight  bins_k x H
///   head.<k>.bias    bins_k
///
/// k indexes sampling steps, not canonical factors.
class PolicyParams {
 public:
  PolicyParams() = default;
  PolicyParams(int embed_dim, int hidden_dim, std::vector<int> step_bins);

  int embed_dim() const { return embed_; }
  int hidden_dim() const { return hidden_; }
  int steps() const { return static_cast<int>(step_bins_.size()); }
  int bins(int step) const { return step_bins_.at(static_cast<size_t>(step)); }
  const std::vector<int>& step_bins() const { return step_bins_; }

  Vector& flat() { return flat_; }
  const Vector& flat() const { return flat_; }

  Eigen::Map<Matrix> lstm_weight() { return matrix(lstm_w_); }
  Eigen::Map<const Matrix> lstm_weight() const { return matrix(lstm_w_); }
  Eigen::Map<Vector> lstm_bias() { return vector(lstm_b_); }
  Eigen::Map<const Vector> lstm_bias() const { return vector(lstm_b_); }
  Eigen::Map<Vector> init_hidden() { return vector(h0_); }
  Eigen::Map<const Vector> init_hidden() const { return vector(h0_); }
  Eigen::Map<Vector> init_cell() { return vector(c0_); }
  Eigen::Map<const Vector> init_cell() const { return vector(c0_); }
  Eigen::Map<Matrix> embedding(int step) { return matrix(embed_blocks_.at(step)); }
  Eigen::Map<const Matrix> embedding(int step) const { return matrix(embed_blocks_.at(step)); }
  Eigen::Map<Matrix> head_weight(int step) { return matrix(head_w_.at(step)); }
  Eigen::Map<const Matrix> head_weight(int step) const { return matrix(head_w_.at(step)); }
  Eigen::Map<Vector> head_bias(int step) { return vector(head_b_.at(step)); }
  Eigen::Map<const Vector> head_bias(int step) const { return vector(head_b_.at(step)); }

  /// Fills weights and embeddings from U[-scale, scale]; biases and the
  /// initial state stay zero.
  void initialize(Rng& rng, double scale);

  /// Tensor names with their flat offset ranges, in layout order.
  struct Block {
    std::string name;
    Eigen::Index offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 1;
    Eigen::Index size() const { return rows * cols; }
  };
  std::vector<Block> blocks() const;

  nlohmann::json to_json() const;
  static PolicyParams from_json(const nlohmann::json& j);

 private:
  Eigen::Map<Matrix> matrix(const Block& b) {
    return Eigen::Map<Matrix>(flat_.data() + b.offset, b.rows, b.cols);
  }
  Eigen::Map<const Matrix> matrix(const Block& b) const {
    return Eigen::Map<const Matrix>(flat_.data() + b.offset, b.rows, b.cols);
  }
  Eigen::Map<Vector> vector(const Block& b) {
    return Eigen::Map<Vector>(flat_.data() + b.offset, b.rows);
  }
  Eigen::Map<const Vector> vector(const Block& b) const {
    return Eigen::Map<const Vector>(flat_.data() + b.offset, b.rows);
  }

  int embed_ = 0;
  int hidden_ = 0;
  std::vector<int> step_bins_;
  Block lstm_w_, lstm_b_, h0_, c0_;
  std::vector<Block> embed_blocks_, head_w_, head_b_;
  Vector flat_;
};

/// One sampled scenario. Indices and log-probabilities are in sampling order.
struct Rollout {
  std::vector<int> bin_indices;
  std::vector<double> log_probs;
  double reward = 0.0;

  double log_prob() const;
};

/// Sampling-order step probabilities along a fixed action sequence.
std::vector<Vector> step_distributions(const PolicyParams& params, std::span<const int> actions);

/// Samples one bin per step; probabilities of step k+1 condition on the bins
/// drawn at steps 0..k through the recurrent state.
Rollout sample_rollout(const PolicyParams& params, Rng& rng);

/// Maps a rollout to a canonical-order scenario. `order[k]` is the factor
/// sampled at step k.
Scenario rollout_scenario(const Rollout& rollout, const ScenarioSpace& space,
                          std::span<const int> order, std::optional<int> bins_override);

std::pair<Scenario, Rollout> sample_scenario(const PolicyParams& params,
                                             const ScenarioSpace& space,
                                             std::span<const int> order,
                                             std::optional<int> bins_override, Rng& rng);

/// log P(actions) under the policy.
double sequence_log_prob(const PolicyParams& params, std::span<const int> actions);

/// Adds weight * grad_theta log P(actions) to `grad` by backpropagation
/// through time over the sampling steps.
void accumulate_log_prob_gradient(const PolicyParams& params, std::span<const int> actions,
                                  double weight, Vector& grad);

/// Per-rollout advantages: reward minus the batch mean (or the raw reward).
std::vector<double> advantages(std::span<const Rollout> batch, Baseline baseline);

/// Gradient of (1/B) sum_b advantage_b * log P(s_b), the REINFORCE surrogate.
Vector policy_gradient(const PolicyParams& params, std::span<const Rollout> batch,
                       Baseline baseline);

/// One Adam ascent step on the REINFORCE surrogate. Throws InvalidConfig if
/// the batch does not hold exactly config.batch_size rollouts.
void policy_gradient_update(PolicyParams& params, std::span<const Rollout> batch,
                            AdamState& adam, const RlConfig& config);

/// Sequential LSTM policy examiner trained online with REINFORCE. Rollouts
/// are buffered and one policy update fires per full batch.
class RlExaminer final : public Examiner {
 public:
  RlExaminer(ScenarioSpace space, RlConfig config, Rng rng);

  const PolicyParams& params() const { return params_; }
  const RlConfig& config() const { return config_; }
  const std::vector<int>& order() const { return order_; }
  int updates_applied() const { return updates_; }
  size_t buffered() const { return buffer_.size(); }

  nlohmann::json checkpoint() const;

 protected:
  Scenario propose() override;
  void observe(const Scenario& s, double loss) override;

 private:
  ScenarioSpace space_;
  RlConfig config_;
  std::vector<int> order_;
  Rng rng_;
  PolicyParams params_;
  AdamState adam_;
  Rollout pending_;
  std::vector<Rollout> buffer_;
  int updates_ = 0;
};

ExaminerFactory rl_examiner_factory(RlConfig config);

}  // namespace advex
