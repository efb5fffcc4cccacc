#pragma once

#include "advex/examiner.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace advex {

enum class KernelFamily { Matern52, SquaredExponential };

struct KernelConfig {
  KernelFamily family = KernelFamily::Matern52;
  double length_scale = 0.2;  // on unit-cube inputs
  double signal_variance = 1.0;
  double noise_variance = 1e-6;

  void validate() const;
};

void to_json(nlohmann::json& j, const KernelConfig& k);
void from_json(const nlohmann::json& j, KernelConfig& k);

/// Stationary covariance as a function of the scaled distance r = |x - y| / l.
template <typename Scalar>
Scalar kernel_profile(KernelFamily family, Scalar r) {
  using std::exp;
  using std::sqrt;
  if (family == KernelFamily::SquaredExponential) return exp(Scalar(-0.5) * r * r);
  const Scalar a = sqrt(Scalar(5)) * r;
  return (Scalar(1) + a + a * a / Scalar(3)) * exp(-a);
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar kernel(const KernelConfig& k, const Eigen::MatrixBase<DerivedA>& x,
                                 const Eigen::MatrixBase<DerivedB>& y) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar r = (x - y).norm() / Scalar(k.length_scale);
  return Scalar(k.signal_variance) * kernel_profile(k.family, r);
}

/// Cross-covariance between columns of A and columns of B.
Matrix kernel_matrix(const KernelConfig& k, const Eigen::Ref<const Matrix>& A,
                     const Eigen::Ref<const Matrix>& B);

struct UcbConfig {
  double kappa = 2.576;
  int init_random = 2;
  int candidates = 1000;
  int refinement_iterations = 20;
  double refinement_radius = 0.1;  // half-width of each line search, unit-cube units
  bool refit_length_scale = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const UcbConfig& c);
void from_json(const nlohmann::json& j, UcbConfig& c);

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// GP posterior over a scenario space. Inputs live in the unit cube and
/// targets are standardized by the sample mean and standard deviation of the
/// observed losses; predictions are reported in loss units.
///
/// The Cholesky factor of K(W, W) + noise I grows by rank-one appends and is
/// rebuilt from scratch only when an append is numerically unsafe or the
/// kernel changes. Each update costs O(|W|^2), each prediction O(|W|^2).
class GaussianProcess {
 public:
  GaussianProcess(ScenarioSpace space, KernelConfig kernel);

  const ScenarioSpace& space() const { return space_; }
  const KernelConfig& kernel_config() const { return kernel_; }
  Eigen::Index size() const { return inputs_.cols(); }
  const Matrix& inputs() const { return inputs_; }  // unit cube, one column per point
  const Vector& losses() const { return losses_; }
  const LowerTriangular& cholesky() const { return chol_; }
  double loss_mean() const { return y_mean_; }
  double loss_scale() const { return y_scale_; }

  void add(const Scenario& s, double loss);
  /// Replaces the kernel and refactorizes.
  void set_kernel(const KernelConfig& kernel);

  Prediction predict(const Scenario& s) const;
  Prediction predict_unit(const Eigen::Ref<const Vector>& unit) const;
  /// Batched posterior for unit-cube points stored as columns.
  std::pair<Vector, Vector> predict_unit_batch(const Eigen::Ref<const Matrix>& units) const;

  /// Log marginal likelihood of the standardized targets.
  double log_marginal_likelihood() const;
  /// Picks the length scale from `grid` with the highest marginal likelihood.
  void refit_length_scale(const std::vector<double>& grid);

  nlohmann::json snapshot() const;

 private:
  void refactor();
  void refresh_alpha();

  ScenarioSpace space_;
  KernelConfig kernel_;
  Matrix inputs_;
  Vector losses_;
  LowerTriangular chol_;
  Vector alpha_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
};

Prediction gp_predict(const GaussianProcess& gp, const Scenario& s);

/// mean + kappa * sqrt(variance).
double ucb(const GaussianProcess& gp, const UcbConfig& config, const Scenario& s);

struct AcquisitionResult {
  Scenario scenario;
  double value = 0.0;
};

/// Approximate argmax of the UCB: scores `candidates` uniform draws plus
/// every observed point, then refines the best one by golden-section line
/// searches along each coordinate. The result is always inside the space.
AcquisitionResult maximize_acquisition(const GaussianProcess& gp, const UcbConfig& config,
                                       Rng& rng);

class BoExaminer final : public Examiner {
 public:
  BoExaminer(ScenarioSpace space, KernelConfig kernel, UcbConfig ucb, Rng rng);

  const GaussianProcess& gp() const { return gp_; }
  int generated() const { return generated_; }
  /// True when the most recent proposal came from the acquisition function.
  bool last_was_acquisition() const { return last_acquired_; }

 protected:
  Scenario propose() override;
  void observe(const Scenario& s, double loss) override;

 private:
  GaussianProcess gp_;
  UcbConfig ucb_;
  Rng rng_;
  int generated_ = 0;
  bool last_acquired_ = false;
};

ExaminerFactory bo_examiner_factory(KernelConfig kernel, UcbConfig ucb);

}  // namespace advex
