#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace advex {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerically stable softmax (max-subtracted). Throws on empty or
/// non-finite input.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  if (logits.size() == 0) throw std::invalid_argument("softmax: empty logits");
  if (!logits.allFinite()) throw NumericalError("softmax: non-finite logits");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out =
      (logits.array() - logits.maxCoeff()).exp().matrix();
  out /= out.sum();
  return out;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> log_softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  if (logits.size() == 0) throw std::invalid_argument("log_softmax: empty logits");
  if (!logits.allFinite()) throw NumericalError("log_softmax: non-finite logits");
  const Scalar top = logits.maxCoeff();
  const Scalar lse = top + std::log((logits.array() - top).exp().sum());
  return (logits.array() - lse).matrix();
}

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  std::int64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState zeros(Eigen::Index dim, double learning_rate = 1e-3);
};

/// One bias-corrected Adam descent step: params -= lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grads,
               AdamState& state);

/// Dense lower Cholesky factor of K + jitter * I.
struct LowerTriangular {
  Matrix factor;  // strictly-upper part is zero
  double jitter = 0.0;

  Eigen::Index n() const { return factor.rows(); }
  /// Solves (L L^T) x = b.
  Vector solve(const Eigen::Ref<const Vector>& b) const;
  /// Solves L x = b.
  Vector solve_lower(const Eigen::Ref<const Vector>& b) const;
};

struct JitterPolicy {
  double initial_relative = 1e-6;  // times mean diagonal
  int max_retries = 3;
  double growth = 10.0;
};

/// Factorizes K + jitter * I, escalating the jitter when the factorization
/// fails. Throws NumericalError after the last retry.
LowerTriangular cholesky_factor(const Eigen::Ref<const Matrix>& K, double jitter,
                                const JitterPolicy& policy = {});

/// Solves (K + jitter * I) x = b, jitter escalated as in cholesky_factor.
Vector cholesky_solve(const Eigen::Ref<const Matrix>& K, const Eigen::Ref<const Vector>& b,
                      double jitter, const JitterPolicy& policy = {});

/// Extends a factor of K by one row/column [k; k_self]. Returns false when
/// the new pivot is not safely positive; the factor is untouched then.
bool cholesky_append(LowerTriangular& chol, const Eigen::Ref<const Vector>& k, double k_self);

}  // namespace advex
