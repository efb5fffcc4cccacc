#include "advex/numerics.hpp"

namespace advex {

AdamState AdamState::zeros(Eigen::Index dim, double learning_rate) {
  AdamState s;
  s.first_moment = Vector::Zero(dim);
  s.second_moment = Vector::Zero(dim);
  s.learning_rate = learning_rate;
  return s;
}

void adam_step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grads,
               AdamState& state) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: dimension mismatch (params " +
                                std::to_string(params.size()) + ", grads " +
                                std::to_string(grads.size()) + ", moments " +
                                std::to_string(state.first_moment.size()) + ")");
  }
  ++state.step_count;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

Vector LowerTriangular::solve(const Eigen::Ref<const Vector>& b) const {
  Vector x = factor.triangularView<Eigen::Lower>().solve(b);
  factor.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
  return x;
}

Vector LowerTriangular::solve_lower(const Eigen::Ref<const Vector>& b) const {
  return factor.triangularView<Eigen::Lower>().solve(b);
}

namespace {

void check_square_symmetric(const Eigen::Ref<const Matrix>& K) {
  if (K.rows() != K.cols()) throw std::invalid_argument("cholesky: matrix is not square");
  const double scale = std::max(1.0, K.cwiseAbs().maxCoeff());
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("cholesky: matrix is not symmetric");
  }
}

}  // namespace

LowerTriangular cholesky_factor(const Eigen::Ref<const Matrix>& K, double jitter,
                                const JitterPolicy& policy) {
  check_square_symmetric(K);
  if (jitter < 0.0) throw std::invalid_argument("cholesky: negative jitter");
  const Eigen::Index n = K.rows();
  if (n == 0) return {Matrix(0, 0), jitter};

  const double mean_diag = std::max(K.diagonal().mean(), 1e-300);
  double current = jitter;
  for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
    if (attempt == 1) {
      current = std::max(current * policy.growth, policy.initial_relative * mean_diag);
    } else if (attempt > 1) {
      current *= policy.growth;
    }
    Matrix shifted = K;
    shifted.diagonal().array() += current;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() == Eigen::Success && (llt.matrixL().toDenseMatrix().diagonal().array() > 0).all()) {
      return {llt.matrixL().toDenseMatrix(), current};
    }
  }
  throw NumericalError("cholesky: factorization failed after jitter escalation to " +
                       std::to_string(current));
}

Vector cholesky_solve(const Eigen::Ref<const Matrix>& K, const Eigen::Ref<const Vector>& b,
                      double jitter, const JitterPolicy& policy) {
  if (b.size() != K.rows()) throw std::invalid_argument("cholesky_solve: size mismatch");
  return cholesky_factor(K, jitter, policy).solve(b);
}

bool cholesky_append(LowerTriangular& chol, const Eigen::Ref<const Vector>& k, double k_self) {
  const Eigen::Index n = chol.n();
  if (k.size() != n) throw std::invalid_argument("cholesky_append: size mismatch");
  Vector row = n > 0 ? chol.solve_lower(k) : Vector(0);
  const double pivot2 = k_self + chol.jitter - row.squaredNorm();
  // Relative floor keeps the appended factor as well-conditioned as a fresh one.
  if (!(pivot2 > 1e-10 * std::max(k_self, 1e-300))) return false;
  Matrix grown = Matrix::Zero(n + 1, n + 1);
  grown.topLeftCorner(n, n) = chol.factor;
  grown.block(n, 0, 1, n) = row.transpose();
  grown(n, n) = std::sqrt(pivot2);
  chol.factor = std::move(grown);
  return true;
}

}  // namespace advex
