#include <gtest/gtest.h>

#include <random>

#include "scdmhe/diagnostics.hpp"

using namespace scdmhe;

namespace {

Matrix s(double v) { return Matrix::Constant(1, 1, v); }

}  // namespace

TEST(Gramian, ScalarTwoStage) {
  const auto rep = observability_gramian({s(1)}, {s(1), s(1)}, {s(1), s(1)}, 2, 7);
  EXPECT_DOUBLE_EQ(rep.gramian(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(rep.alpha_hat, 2.0);
  EXPECT_EQ(rep.window_start, 7);
}

TEST(Gramian, ZeroOutputIsUnobservable) {
  const Matrix a = (Matrix(2, 2) << 1, 0.05, 0, 1).finished();
  const Matrix c = Matrix::Zero(1, 2);
  const auto rep = observability_gramian({a, a}, {c, c, c}, {s(0.5), s(0.5), s(0.5)}, 3);
  EXPECT_EQ(rep.gramian.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(rep.alpha_hat, 0.0);
}

TEST(Gramian, HandEvaluatedTransitionChain) {
  // Phi_0 = 1, Phi_1 = a0, Phi_2 = a1 a0.
  const double a0 = 0.5, a1 = 3.0, c = 2.0, r = 4.0;
  const auto rep = observability_gramian({s(a0), s(a1)}, {s(c), s(c), s(c)}, {s(r), s(r), s(r)}, 3);
  const double expected = (c * c / r) * (1.0 + a0 * a0 + a1 * a1 * a0 * a0);
  EXPECT_NEAR(rep.gramian(0, 0), expected, 1e-14);
}

TEST(Gramian, LeftAccumulatedProducts) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> d;
  auto rnd = [&](int r, int c) {
    Matrix m(r, c);
    for (int i = 0; i < m.size(); ++i) m(i) = d(gen);
    return m;
  };
  const int l = 5;
  std::vector<Matrix> as, cs, rs;
  for (int j = 0; j < l; ++j) {
    if (j + 1 < l) as.push_back(rnd(2, 2));
    cs.push_back(rnd(1, 2));
    rs.push_back(s(0.3 + j));
  }
  Matrix expected = Matrix::Zero(2, 2);
  for (int j = 0; j < l; ++j) {
    Matrix phi = Matrix::Identity(2, 2);
    for (int i = 0; i < j; ++i) phi = as[i] * phi;
    expected += phi.transpose() * cs[j].transpose() * cs[j] * phi / rs[j](0, 0);
  }
  const auto rep = observability_gramian(as, cs, rs, l);
  EXPECT_LE((rep.gramian - expected).cwiseAbs().maxCoeff(), 1e-10 * expected.norm());
  EXPECT_LE((rep.gramian - rep.gramian.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  Eigen::SelfAdjointEigenSolver<Matrix> es(rep.gramian);
  EXPECT_DOUBLE_EQ(rep.alpha_hat, es.eigenvalues().minCoeff());
  EXPECT_GE(rep.alpha_hat, -1e-10);
}

TEST(Gramian, MonotoneInHorizonOnLinearModel) {
  const LinearModel m;
  NoiseSpec noise;
  noise.Q = Matrix::Identity(2, 2);
  noise.R = s(0.5);
  std::vector<Vector> states(40, Vector::Zero(2)), inputs(40, Vector::Zero(1));
  double prev = -1.0;
  for (int l = 2; l <= 30; ++l) {
    std::vector<Matrix> as, cs, rs;
    for (int j = 0; j < l; ++j) {
      if (j + 1 < l) as.push_back(m.a());
      cs.push_back(m.c());
      rs.push_back(noise.R);
    }
    const double a = observability_gramian(as, cs, rs, l).alpha_hat;
    EXPECT_GE(a, prev - 1e-12) << l;
    prev = a;
    EXPECT_NEAR(a, trajectory_gramian(m, noise, states, inputs, l - 1, l).alpha_hat, 1e-12);
  }
  EXPECT_GT(prev, 0.0);
}

TEST(Gramian, DimensionErrors) {
  EXPECT_THROW(observability_gramian({}, {s(1), s(1)}, {s(1), s(1)}, 2), DimensionError);
  EXPECT_THROW(observability_gramian({s(1)}, {s(1)}, {s(1), s(1)}, 2), DimensionError);
  EXPECT_THROW(observability_gramian({Matrix::Identity(2, 2)}, {s(1), s(1)}, {s(1), s(1)}, 2), DimensionError);
  const LinearModel m;
  NoiseSpec noise{Matrix::Identity(2, 2), s(1)};
  EXPECT_THROW(trajectory_gramian(m, noise, std::vector<Vector>(3, Vector::Zero(2)),
                                  std::vector<Vector>(3, Vector::Zero(1)), 1, 4),
               DimensionError);
}

TEST(Gramian, SaturatedWindowStillObservable) {
  const QuadrotorModel m;
  const auto noise = NoiseSpec::quadrotor_benchmark();
  std::vector<Vector> states, inputs;
  Vector x = Eigen::Vector2d(100, -1);
  const ControlSignal u;
  for (int k = 0; k < 13; ++k) {
    states.push_back(x);
    inputs.push_back(Vector::Constant(1, u(k)));
    x = m.dynamics(x, inputs.back(), k);
  }
  const auto rep = trajectory_gramian(m, noise, states, inputs, 11, 12);
  EXPECT_GT(rep.alpha_hat, 0.0);
  EXPECT_EQ(rep.window_start, 0);
}

TEST(Median, OddEvenEmpty) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_TRUE(std::isnan(median({})));
}

TEST(Bounds, ConstantCovarianceSeries) {
  MonitorInput in;
  const Matrix p = Eigen::Vector2d(0.2, 3.0).asDiagonal();
  for (int k = 0; k < 20; ++k) {
    in.steps.push_back(k);
    in.arrival_cov.push_back(p);
    in.transition.push_back(Matrix::Identity(2, 2));
    in.output.push_back((Matrix(1, 2) << 3, 4).finished());
    in.truth.push_back(Vector::Zero(2));
    in.estimate.push_back(Vector::Constant(2, 0.1));
  }
  const auto log = bounds_monitor(in);
  EXPECT_TRUE(log.ok());
  for (double v : log.p_min_eig) EXPECT_DOUBLE_EQ(v, 0.2);
  for (double v : log.p_max_eig) EXPECT_DOUBLE_EQ(v, 3.0);
  for (double v : log.c_norm) EXPECT_DOUBLE_EQ(v, 5.0);
  EXPECT_NEAR(log.sup_error, std::sqrt(0.02), 1e-15);
}

TEST(Bounds, FlagsViolations) {
  MonitorInput in;
  for (int k = 0; k < 10; ++k) {
    in.steps.push_back(k);
    in.arrival_cov.push_back(k == 3 ? Matrix(1e-9 * Matrix::Identity(2, 2)) : Matrix(Matrix::Identity(2, 2)));
    in.truth.push_back(Vector::Zero(2));
    in.estimate.push_back(Vector::Constant(2, k == 1 ? 100.0 : 1.0));
  }
  const auto log = bounds_monitor(in);
  EXPECT_FALSE(log.ok());
  EXPECT_EQ(log.violations.size(), 2u);
  EXPECT_NE(log.violations[0].find("entry 3"), std::string::npos);
  EXPECT_NE(log.violations[1].find("second-half median"), std::string::npos);
}
