#include "advex/numerics.hpp"
#include "advex/rng.hpp"
#include "advex/scenario.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

namespace advex {
namespace {

Matrix random_spd(int n, Rng& rng) {
  Matrix A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = rng.uniform(-1.0, 1.0);
  return A * A.transpose() + n * Matrix::Identity(n, n);
}

TEST(Softmax, UniformLogits) {
  const Vector p = softmax(Vector::Zero(3));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  Vector logits(2);
  logits << 1000.0, 0.0;
  const Vector p = softmax(logits);
  EXPECT_NEAR(p[0], 1.0, 1e-15);
  EXPECT_NEAR(p[1], 0.0, 1e-15);
  EXPECT_TRUE(p.allFinite());
}

TEST(Softmax, ShiftInvariance) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    Vector logits(6);
    for (int i = 0; i < 6; ++i) logits[i] = rng.uniform(-20.0, 20.0);
    const double c = rng.uniform(-500.0, 500.0);
    const Vector a = softmax(logits);
    const Vector b = softmax((logits.array() + c).matrix());
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(a.sum(), 1.0, 1e-12);
  }
}

TEST(Softmax, LogSoftmaxAgrees) {
  Vector logits(4);
  logits << 0.3, -2.0, 5.0, 1.0;
  EXPECT_LT((log_softmax(logits).array().exp().matrix() - softmax(logits)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Softmax, RejectsBadInput) {
  Vector logits(2);
  logits << 0.0, std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(softmax(logits), NumericalError);
  logits[1] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(softmax(logits), NumericalError);
  EXPECT_THROW(softmax(Vector(0)), std::invalid_argument);
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  Vector params(3);
  params << 1.0, -2.0, 0.5;
  const Vector before = params;
  AdamState state = AdamState::zeros(3);
  adam_step(params, Vector::Zero(3), state);
  EXPECT_EQ(params, before);
  EXPECT_EQ(state.step_count, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Vector params = Vector::Zero(1);
  Vector grad = Vector::Ones(1);
  AdamState state = AdamState::zeros(1, 0.001);
  adam_step(params, grad, state);
  // m_hat = 1, v_hat = 1: step = lr / (1 + eps).
  EXPECT_NEAR(params[0], -0.001 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, Deterministic) {
  auto run = [] {
    Rng rng(3);
    Vector params = Vector::Zero(5);
    AdamState state = AdamState::zeros(5, 0.01);
    for (int k = 0; k < 50; ++k) {
      Vector g(5);
      for (int i = 0; i < 5; ++i) g[i] = rng.uniform(-1.0, 1.0);
      adam_step(params, g, state);
    }
    return params;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, DimensionMismatchThrows) {
  Vector params = Vector::Zero(2);
  AdamState state = AdamState::zeros(2);
  EXPECT_ANY_THROW(adam_step(params, Vector::Zero(3), state));
}

TEST(Cholesky, Identity) {
  Vector b(3);
  b << 1.0, 2.0, 3.0;
  EXPECT_LT((cholesky_solve(Matrix::Identity(3, 3), b, 0.0) - b).norm(), 1e-14);
}

TEST(Cholesky, Diagonal) {
  Matrix K(2, 2);
  K << 4.0, 0.0, 0.0, 9.0;
  Vector b(2);
  b << 8.0, 27.0;
  const Vector x = cholesky_solve(K, b, 0.0);
  EXPECT_NEAR(x[0], 2.0, 1e-14);
  EXPECT_NEAR(x[1], 3.0, 1e-14);
}

TEST(Cholesky, MatchesDenseInverse) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix K = random_spd(5, rng);
    Vector b(5);
    for (int i = 0; i < 5; ++i) b[i] = rng.uniform(-3.0, 3.0);
    const Vector oracle = K.inverse() * b;
    EXPECT_LT((cholesky_solve(K, b, 0.0) - oracle).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Cholesky, ReconstructsInput) {
  Rng rng(12);
  for (int n : {1, 3, 8, 20}) {
    const Matrix K = random_spd(n, rng);
    const LowerTriangular L = cholesky_factor(K, 1e-3);
    const Matrix shifted = K + L.jitter * Matrix::Identity(n, n);
    EXPECT_LT((L.factor * L.factor.transpose() - shifted).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_EQ(L.factor.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Cholesky, ResidualBound) {
  Rng rng(13);
  const Matrix K = random_spd(10, rng);
  Vector b(10);
  for (int i = 0; i < 10; ++i) b[i] = rng.uniform(-1.0, 1.0);
  const double jitter = 1e-4;
  const Vector x = cholesky_solve(K, b, jitter);
  EXPECT_LE(((K + jitter * Matrix::Identity(10, 10)) * x - b).norm(), 1e-8 * b.norm());
}

TEST(Cholesky, JitterRescuesSingularMatrix) {
  Vector v(3);
  v << 1.0, 2.0, 3.0;
  const Matrix K = v * v.transpose();  // rank one
  const LowerTriangular L = cholesky_factor(K, 0.0);
  EXPECT_GT(L.jitter, 0.0);
  EXPECT_TRUE(L.factor.allFinite());
}

TEST(Cholesky, FailsAfterRetries) {
  Matrix K = Matrix::Identity(3, 3);
  K(2, 2) = -5.0;
  EXPECT_THROW(cholesky_factor(K, 0.0), NumericalError);
}

TEST(Cholesky, AppendMatchesFullFactor) {
  Rng rng(14);
  const Matrix K = random_spd(6, rng);
  LowerTriangular L = cholesky_factor(K.topLeftCorner(5, 5), 0.0);
  ASSERT_EQ(L.jitter, 0.0);
  ASSERT_TRUE(cholesky_append(L, K.col(5).head(5), K(5, 5)));
  EXPECT_LT((L.factor * L.factor.transpose() - K).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Cholesky, AppendRejectsDependentColumn) {
  LowerTriangular L = cholesky_factor(Matrix::Identity(2, 2), 0.0);
  Vector k(2);
  k << 1.0, 0.0;
  const Matrix before = L.factor;
  EXPECT_FALSE(cholesky_append(L, k, 1.0));  // duplicate of the first point
  EXPECT_EQ(L.factor, before);
}

TEST(RngStreams, ReproduciblePerId) {
  Rng a = Rng::stream(42, 5);
  Rng b = Rng::stream(42, 5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(RngStreams, DistinctIdsGiveDistinctPrefixes) {
  std::set<std::vector<std::uint64_t>> prefixes;
  for (std::uint64_t id = 0; id < 200; ++id) {
    Rng r = Rng::stream(1, id);
    prefixes.insert({r.next(), r.next(), r.next()});
  }
  Rng other = Rng::stream(2, 0);
  prefixes.insert({other.next(), other.next(), other.next()});
  EXPECT_EQ(prefixes.size(), 201u);
}

TEST(RngStreams, SplitDoesNotAdvanceParent) {
  Rng a(9), b(9);
  (void)a.split(3);
  EXPECT_EQ(a.next(), b.next());
  Rng c = Rng(9).split(3);
  Rng d = Rng::stream(9, 3);
  EXPECT_EQ(c.next(), d.next());
}

TEST(RngStreams, UniformRangeAndCategorical) {
  Rng r(5);
  Vector probs(3);
  probs << 0.2, 0.0, 0.8;
  int counts[3] = {};
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ++counts[r.categorical(probs)];
  }
  EXPECT_EQ(counts[1], 0);
  EXPECT_NEAR(counts[0] / 20000.0, 0.2, 0.015);
}

TEST(Scenario, BinToValueEndpointsAndMidpoint) {
  const Factor angle{"rotation", 0.0, 2.0 * std::numbers::pi, 100};
  EXPECT_EQ(bin_to_value(angle, 0), 0.0);
  EXPECT_DOUBLE_EQ(bin_to_value(angle, 99), 2.0 * std::numbers::pi);
  const Factor f{"x", 0.0, 100.0, 101};
  EXPECT_DOUBLE_EQ(bin_to_value(f, 50), 50.0);
  EXPECT_ANY_THROW(bin_to_value(f, 101));
  EXPECT_ANY_THROW(bin_to_value(f, -1));
}

TEST(Scenario, SpaceContainsAndNormalize) {
  const ScenarioSpace space({{"a", -1.0, 1.0, 10}, {"b", 0.0, 4.0, 5}});
  Scenario s(2);
  s << 0.0, 4.0;
  EXPECT_TRUE(space.contains(s));
  EXPECT_LT((space.denormalize(space.normalize(s)) - s).norm(), 1e-15);
  s[1] = 4.0001;
  EXPECT_FALSE(space.contains(s));
  EXPECT_THROW(space.require_contains(s), ContractViolation);
  EXPECT_EQ(space.index_of("b"), 1);
  EXPECT_THROW(space.index_of("c"), InvalidConfig);
}

TEST(Scenario, SpaceJsonRoundTrip) {
  const ScenarioSpace space({{"a", -1.0, 1.0, 10}, {"b", 0.0, 4.0, 5}});
  const nlohmann::json j = space;
  EXPECT_EQ(j.get<ScenarioSpace>(), space);
}

TEST(Scenario, InvalidFactorRejected) {
  EXPECT_ANY_THROW(ScenarioSpace({{"a", 1.0, 0.0, 10}}));
  EXPECT_ANY_THROW(ScenarioSpace({{"a", 0.0, 1.0, 1}}));
}

}  // namespace
}  // namespace advex
