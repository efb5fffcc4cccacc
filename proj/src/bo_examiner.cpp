#include "advex/bo_examiner.hpp"

#include <algorithm>
#include <limits>
#include <numbers>

namespace advex {

void KernelConfig::validate() const {
  if (!(length_scale > 0.0) || !(signal_variance > 0.0) || !(noise_variance > 0.0)) {
    throw InvalidConfig("kernel hyperparameters must be strictly positive");
  }
}

void to_json(nlohmann::json& j, const KernelConfig& k) {
  j = {{"family", k.family == KernelFamily::Matern52 ? "matern52" : "squared-exponential"},
       {"length_scale", k.length_scale},
       {"signal_variance", k.signal_variance},
       {"noise_variance", k.noise_variance}};
}

void from_json(const nlohmann::json& j, KernelConfig& k) {
  try {
    const std::string family = j.value("family", std::string("matern52"));
    if (family == "matern52") {
      k.family = KernelFamily::Matern52;
    } else if (family == "squared-exponential") {
      k.family = KernelFamily::SquaredExponential;
    } else {
      throw InvalidConfig("kernel family must be 'matern52' or 'squared-exponential'");
    }
    k.length_scale = j.value("length_scale", k.length_scale);
    k.signal_variance = j.value("signal_variance", k.signal_variance);
    k.noise_variance = j.value("noise_variance", k.noise_variance);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("kernel config: ") + e.what());
  }
  k.validate();
}

void UcbConfig::validate() const {
  if (!(kappa >= 0.0)) throw InvalidConfig("ucb: kappa must be >= 0");
  if (init_random < 0) throw InvalidConfig("ucb: init_random must be >= 0");
  if (candidates < 1) throw InvalidConfig("ucb: candidates must be >= 1");
  if (refinement_iterations < 0) throw InvalidConfig("ucb: refinement_iterations must be >= 0");
  if (!(refinement_radius > 0.0)) throw InvalidConfig("ucb: refinement_radius must be > 0");
}

void to_json(nlohmann::json& j, const UcbConfig& c) {
  j = {{"kappa", c.kappa},
       {"init_random", c.init_random},
       {"candidates", c.candidates},
       {"refinement_iterations", c.refinement_iterations},
       {"refinement_radius", c.refinement_radius},
       {"refit_length_scale", c.refit_length_scale}};
}

void from_json(const nlohmann::json& j, UcbConfig& c) {
  try {
    c.kappa = j.value("kappa", c.kappa);
    c.init_random = j.value("init_random", c.init_random);
    c.candidates = j.value("candidates", c.candidates);
    c.refinement_iterations = j.value("refinement_iterations", c.refinement_iterations);
    c.refinement_radius = j.value("refinement_radius", c.refinement_radius);
    c.refit_length_scale = j.value("refit_length_scale", c.refit_length_scale);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("ucb config: ") + e.what());
  }
  c.validate();
}

Matrix kernel_matrix(const KernelConfig& k, const Eigen::Ref<const Matrix>& A,
                     const Eigen::Ref<const Matrix>& B) {
  Matrix out(A.cols(), B.cols());
  for (Eigen::Index j = 0; j < B.cols(); ++j) {
    for (Eigen::Index i = 0; i < A.cols(); ++i) out(i, j) = kernel(k, A.col(i), B.col(j));
  }
  return out;
}

// ---------------------------------------------------------------------------

GaussianProcess::GaussianProcess(ScenarioSpace space, KernelConfig kernel)
    : space_(std::move(space)), kernel_(kernel), inputs_(space_.size(), 0) {
  kernel_.validate();
  chol_.factor = Matrix(0, 0);
}

void GaussianProcess::add(const Scenario& s, double loss) {
  space_.require_contains(s);
  if (!std::isfinite(loss)) throw NumericalError("gp: non-finite loss");
  const Vector unit = space_.normalize(s);
  const Eigen::Index n = size();

  const Vector k = n > 0 ? kernel_matrix(kernel_, inputs_, unit).col(0) : Vector(0);
  inputs_.conservativeResize(Eigen::NoChange, n + 1);
  inputs_.col(n) = unit;
  losses_.conservativeResize(n + 1);
  losses_[n] = loss;

  if (!cholesky_append(chol_, k, kernel_.signal_variance + kernel_.noise_variance)) refactor();
  refresh_alpha();
}

void GaussianProcess::set_kernel(const KernelConfig& kernel) {
  kernel.validate();
  kernel_ = kernel;
  refactor();
  refresh_alpha();
}

void GaussianProcess::refactor() {
  Matrix K = kernel_matrix(kernel_, inputs_, inputs_);
  K.diagonal().array() += kernel_.noise_variance;
  chol_ = cholesky_factor(K, 0.0);
}

void GaussianProcess::refresh_alpha() {
  const Eigen::Index n = size();
  if (n == 0) {
    y_mean_ = 0.0;
    y_scale_ = 1.0;
    alpha_ = Vector(0);
    return;
  }
  y_mean_ = losses_.mean();
  const double var = (losses_.array() - y_mean_).square().mean();
  y_scale_ = (n >= 2 && var > 1e-24) ? std::sqrt(var) : 1.0;
  alpha_ = chol_.solve((losses_.array() - y_mean_).matrix() / y_scale_);
}

Prediction GaussianProcess::predict(const Scenario& s) const {
  space_.require_contains(s);
  return predict_unit(space_.normalize(s));
}

Prediction GaussianProcess::predict_unit(const Eigen::Ref<const Vector>& unit) const {
  auto [mean, var] = predict_unit_batch(unit);
  return {mean[0], var[0]};
}

std::pair<Vector, Vector> GaussianProcess::predict_unit_batch(
    const Eigen::Ref<const Matrix>& units) const {
  const Eigen::Index m = units.cols();
  if (units.rows() != space_.size()) throw std::invalid_argument("gp: input dimension mismatch");
  if (chol_.n() != size() || alpha_.size() != size()) {
    throw std::logic_error("gp: cached factorization is stale");
  }
  if (size() == 0) {
    return {Vector::Constant(m, y_mean_),
            Vector::Constant(m, kernel_.signal_variance * y_scale_ * y_scale_)};
  }
  const Matrix cross = kernel_matrix(kernel_, inputs_, units);
  Vector mean = (cross.transpose() * alpha_).array() * y_scale_ + y_mean_;
  const Matrix v = chol_.factor.triangularView<Eigen::Lower>().solve(cross);
  Vector var = (kernel_.signal_variance - v.colwise().squaredNorm().transpose().array())
                   .cwiseMax(0.0) *
               (y_scale_ * y_scale_);
  return {std::move(mean), std::move(var)};
}

double GaussianProcess::log_marginal_likelihood() const {
  const Eigen::Index n = size();
  if (n == 0) return 0.0;
  const Vector y = (losses_.array() - y_mean_).matrix() / y_scale_;
  return -0.5 * y.dot(alpha_) - chol_.factor.diagonal().array().log().sum() -
         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

void GaussianProcess::refit_length_scale(const std::vector<double>& grid) {
  if (grid.empty() || size() < 2) return;
  KernelConfig best = kernel_;
  double best_lml = -std::numeric_limits<double>::infinity();
  for (double l : grid) {
    KernelConfig trial = kernel_;
    trial.length_scale = l;
    set_kernel(trial);
    const double lml = log_marginal_likelihood();
    if (lml > best_lml) {
      best_lml = lml;
      best = trial;
    }
  }
  set_kernel(best);
}

nlohmann::json GaussianProcess::snapshot() const {
  nlohmann::json points = nlohmann::json::array();
  for (Eigen::Index i = 0; i < size(); ++i) {
    const Scenario s = space_.denormalize(inputs_.col(i));
    points.push_back({{"scenario", std::vector<double>(s.begin(), s.end())}, {"loss", losses_[i]}});
  }
  return {{"space", space_}, {"kernel", kernel_}, {"W", points}};
}

Prediction gp_predict(const GaussianProcess& gp, const Scenario& s) { return gp.predict(s); }

double ucb(const GaussianProcess& gp, const UcbConfig& config, const Scenario& s) {
  const Prediction p = gp.predict(s);
  return p.mean + config.kappa * std::sqrt(p.variance);
}

namespace {

double ucb_unit(const GaussianProcess& gp, double kappa, const Vector& unit) {
  const Prediction p = gp.predict_unit(unit);
  return p.mean + kappa * std::sqrt(p.variance);
}

/// Golden-section maximization of f on [lo, hi].
template <typename F>
std::pair<double, double> golden_section_max(F&& f, double lo, double hi, int iterations) {
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - ratio * (b - a), x2 = a + ratio * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < iterations; ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + ratio * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - ratio * (b - a);
      f1 = f(x1);
    }
  }
  return f1 >= f2 ? std::pair{x1, f1} : std::pair{x2, f2};
}

}  // namespace

AcquisitionResult maximize_acquisition(const GaussianProcess& gp, const UcbConfig& config,
                                       Rng& rng) {
  const Eigen::Index d = gp.space().size();
  const Eigen::Index n = gp.size();
  Matrix pool(d, config.candidates + n);
  for (int c = 0; c < config.candidates; ++c) {
    for (Eigen::Index i = 0; i < d; ++i) pool(i, c) = rng.uniform();
  }
  if (n > 0) pool.rightCols(n) = gp.inputs();

  const auto [mean, var] = gp.predict_unit_batch(pool);
  const Vector score = mean + config.kappa * var.cwiseSqrt();
  Eigen::Index best_col = 0;
  for (Eigen::Index c = 1; c < score.size(); ++c) {
    if (score[c] > score[best_col]) best_col = c;
  }
  Vector best = pool.col(best_col);
  double best_value = score[best_col];

  if (config.refinement_iterations > 0) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double lo = std::max(0.0, best[i] - config.refinement_radius);
      const double hi = std::min(1.0, best[i] + config.refinement_radius);
      Vector probe = best;
      auto along = [&](double x) {
        probe[i] = x;
        return ucb_unit(gp, config.kappa, probe);
      };
      const auto [x, value] = golden_section_max(along, lo, hi, config.refinement_iterations);
      if (value > best_value) {
        best[i] = x;
        best_value = value;
      }
    }
  }
  return {gp.space().denormalize(best), best_value};
}

// ---------------------------------------------------------------------------

BoExaminer::BoExaminer(ScenarioSpace space, KernelConfig kernel, UcbConfig ucb, Rng rng)
    : gp_(std::move(space), kernel), ucb_(ucb), rng_(rng) {
  ucb_.validate();
}

Scenario BoExaminer::propose() {
  ++generated_;
  last_acquired_ = generated_ > ucb_.init_random && gp_.size() > 0;
  if (!last_acquired_) return gp_.space().sample_uniform(rng_);
  return maximize_acquisition(gp_, ucb_, rng_).scenario;
}

void BoExaminer::observe(const Scenario& s, double loss) {
  gp_.add(s, loss);
  if (ucb_.refit_length_scale) gp_.refit_length_scale({0.05, 0.1, 0.2, 0.3, 0.5, 0.8});
}

ExaminerFactory bo_examiner_factory(KernelConfig kernel, UcbConfig ucb) {
  return [kernel, ucb](const ScenarioSpace& space, Rng rng) {
    return std::make_unique<BoExaminer>(space, kernel, ucb, rng);
  };
}

}  // namespace advex
