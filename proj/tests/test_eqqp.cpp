#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "scdmhe/eqqp.hpp"

using namespace scdmhe;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }
Vector vscalar(double v) { return Vector::Constant(1, v); }

Matrix random_spd(std::mt19937_64& gen, int n) {
  std::normal_distribution<double> d;
  Matrix m(n, n);
  for (int i = 0; i < m.size(); ++i) m(i) = d(gen);
  return m * m.transpose() + 0.5 * Matrix::Identity(n, n);
}

Matrix random_matrix(std::mt19937_64& gen, int r, int c) {
  std::normal_distribution<double> d;
  Matrix m(r, c);
  for (int i = 0; i < m.size(); ++i) m(i) = d(gen);
  return m;
}

WindowProblem random_problem(std::mt19937_64& gen, int n, int p, int l) {
  WindowProblem w;
  w.arrival = {random_matrix(gen, n, 1), random_spd(gen, n)};
  for (int j = 0; j < l; ++j) {
    if (j + 1 < l) {
      w.transition.push_back(random_matrix(gen, n, n));
      w.transition_rhs.push_back(random_matrix(gen, n, 1));
      w.process_cov.push_back(random_spd(gen, n));
    }
    w.output.push_back(random_matrix(gen, p, n));
    w.output_rhs.push_back(random_matrix(gen, p, 1));
    w.measurement_cov.push_back(random_spd(gen, p));
  }
  return w;
}

// Dense reference: build the bordered system directly from the window cost
// and constraints with explicit index arithmetic, then solve it by full
// pivoting LU.
struct DenseReference {
  Matrix H, A;
  Vector f, b, z, lambda;
};

DenseReference dense_reference(const WindowProblem& w) {
  const int l = static_cast<int>(w.output.size());
  const int n = static_cast<int>(w.arrival.x_bar.size());
  const int p = static_cast<int>(w.output.front().rows());
  const int nz = n * l + n * (l - 1) + p * l;
  const int nc = n * (l - 1) + p * l;
  auto chi = [&](int j) { return j * n; };
  auto omega = [&](int j) { return n * l + j * n; };
  auto nu = [&](int j) { return n * l + n * (l - 1) + j * p; };

  DenseReference r;
  r.H = Matrix::Zero(nz, nz);
  r.f = Vector::Zero(nz);
  r.A = Matrix::Zero(nc, nz);
  r.b = Vector::Zero(nc);
  const Matrix pinv = w.arrival.P.inverse();
  r.H.block(0, 0, n, n) = 2.0 * pinv;
  r.f.head(n) = -2.0 * pinv * w.arrival.x_bar;
  for (int j = 0; j + 1 < l; ++j) {
    r.H.block(omega(j), omega(j), n, n) = 2.0 * w.process_cov[j].inverse();
    r.A.block(j * n, chi(j + 1), n, n) = Matrix::Identity(n, n);
    r.A.block(j * n, chi(j), n, n) = -w.transition[j];
    r.A.block(j * n, omega(j), n, n) = -Matrix::Identity(n, n);
    r.b.segment(j * n, n) = w.transition_rhs[j];
  }
  for (int j = 0; j < l; ++j) {
    r.H.block(nu(j), nu(j), p, p) = 2.0 * w.measurement_cov[j].inverse();
    const int row = n * (l - 1) + j * p;
    r.A.block(row, chi(j), p, n) = w.output[j];
    r.A.block(row, nu(j), p, p) = Matrix::Identity(p, p);
    r.b.segment(row, p) = w.output_rhs[j];
  }
  Matrix kkt = Matrix::Zero(nz + nc, nz + nc);
  kkt.topLeftCorner(nz, nz) = r.H;
  kkt.topRightCorner(nz, nc) = r.A.transpose();
  kkt.bottomLeftCorner(nc, nz) = r.A;
  Vector rhs(nz + nc);
  rhs << -r.f, r.b;
  const Vector sol = kkt.fullPivLu().solve(rhs);
  r.z = sol.head(nz);
  r.lambda = sol.tail(nc);
  return r;
}

}  // namespace

TEST(Assemble, HandExampleScalarHorizonTwo) {
  const double a = 0.9, b = 0.3, c = 2.0, u = 1.5, y0 = 0.7, y1 = -0.2;
  const EqualityQP qp = assemble_qp({vscalar(0.1), scalar(1.0)}, {scalar(0.2)}, {scalar(0.4), scalar(0.4)},
                                    {ScdcFactors{scalar(a), scalar(b)}}, {scalar(c), scalar(c)}, {vscalar(u)},
                                    {vscalar(y0), vscalar(y1)}, 2);
  EXPECT_EQ(qp.num_variables(), 5);
  EXPECT_EQ(qp.num_constraints(), 3);
  Matrix expected_a(3, 5);
  expected_a << -a, 1, -1, 0, 0,
                 c, 0, 0, 1, 0,
                 0, c, 0, 0, 1;
  EXPECT_EQ(Matrix(qp.constraints), expected_a);
  EXPECT_NEAR(qp.rhs(0), b * u, 1e-16);
  EXPECT_EQ(qp.rhs(1), y0);
  EXPECT_EQ(qp.rhs(2), y1);
}

TEST(Assemble, HessianTraceAndPattern) {
  const double q = 0.2, r = 0.4;
  const EqualityQP qp = assemble_qp({vscalar(0.3), scalar(1.0)}, {scalar(q)}, {scalar(r), scalar(r)},
                                    {ScdcFactors{scalar(1.0), scalar(0.0)}}, {scalar(1.0), scalar(1.0)},
                                    {vscalar(0.0)}, {vscalar(0.0), vscalar(0.0)}, 2);
  const Matrix H(qp.hessian);
  EXPECT_NEAR(H.trace(), 2.0 + 0.0 + 2.0 / q + 2.0 / r + 2.0 / r, 1e-12);
  EXPECT_EQ(H(1, 1), 0.0);
  EXPECT_EQ((H - H.transpose()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_NEAR(qp.linear(0), -2.0 * 0.3, 1e-16);
  EXPECT_EQ(qp.linear.tail(4).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Assemble, MatchesDenseReferenceLayout) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 3, p = 1 + trial % 2, l = 2 + trial % 4;
    const auto w = random_problem(gen, n, p, l);
    const auto qp = assemble_qp(w);
    const auto ref = dense_reference(w);
    EXPECT_LE((Matrix(qp.constraints) - ref.A).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LE((qp.rhs - ref.b).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LE((Matrix(qp.hessian) - ref.H).cwiseAbs().maxCoeff(), 1e-10 * ref.H.cwiseAbs().maxCoeff());
    EXPECT_LE((qp.linear - ref.f).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, ref.f.cwiseAbs().maxCoeff()));
  }
}

TEST(Assemble, RegularizationAddsToNoiseBlocks) {
  std::mt19937_64 gen(9);
  auto w = random_problem(gen, 2, 1, 3);
  const Matrix base(assemble_qp(w).hessian);
  w.regularization = 0.25;
  const Matrix reg(assemble_qp(w).hessian);
  const Matrix diff = reg - base;
  EXPECT_NEAR(diff.topLeftCorner(6, 6).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  EXPECT_NEAR(diff.bottomRightCorner(7, 7).diagonal().minCoeff(), 0.5, 1e-12);
  EXPECT_NEAR(diff.bottomRightCorner(7, 7).diagonal().maxCoeff(), 0.5, 1e-12);
}

TEST(Assemble, Errors) {
  std::mt19937_64 gen(1);
  auto w = random_problem(gen, 2, 1, 3);
  auto bad = w;
  bad.output.pop_back();
  EXPECT_THROW(assemble_qp(bad), DimensionError);
  bad = w;
  bad.process_cov[1](0, 0) = -5.0;
  EXPECT_THROW(assemble_qp(bad), CovarianceError);
  bad = w;
  bad.arrival.P = Matrix::Zero(2, 2);
  EXPECT_THROW(assemble_qp(bad), CovarianceError);
  bad = w;
  bad.measurement_cov[0] = Matrix::Identity(2, 2);
  EXPECT_THROW(assemble_qp(bad), DimensionError);
}

TEST(Assemble, ConstraintNonzerosGrowLinearly) {
  std::mt19937_64 gen(2);
  const int n = 2, p = 1;
  const long kappa = n * n + 2 * n + p * n + p;  // per stage: -A, I, -I, C, I
  for (int l : {2, 4, 8, 16, 32, 64}) {
    const auto qp = assemble_qp(random_problem(gen, n, p, l));
    EXPECT_LE(qp.constraints.nonZeros(), kappa * l);
  }
}

TEST(Kkt, TrivialProjection) {
  const auto qp = EqualityQP::unstructured(2.0 * Matrix::Identity(2, 2), Vector::Zero(2),
                                           Matrix::Ones(1, 2), Vector::Ones(1));
  const auto sol = solve_kkt(qp);
  EXPECT_NEAR(sol.z(0), 0.5, 1e-15);
  EXPECT_NEAR(sol.z(1), 0.5, 1e-15);
}

TEST(Kkt, HandSolvedTwoByTwo) {
  // (z1 - 1)^2 + z2^2 = 1/2 z' (2I) z + [-2, 0] z + 1, s.t. z1 - z2 = 0.
  Matrix a(1, 2);
  a << 1, -1;
  const auto qp = EqualityQP::unstructured(2.0 * Matrix::Identity(2, 2), Eigen::Vector2d(-2, 0), a,
                                           Vector::Zero(1));
  const auto sol = solve_kkt(qp);
  EXPECT_NEAR(sol.z(0), 0.5, 1e-15);
  EXPECT_NEAR(sol.z(1), 0.5, 1e-15);
  // 2 z1 - 2 + lambda = 0 and 2 z2 - lambda = 0.
  EXPECT_NEAR(sol.multipliers(0), 1.0, 1e-15);
  EXPECT_LE(sol.kkt_residual, 1e-15);
}

TEST(Kkt, ZeroDataGivesZero) {
  WindowProblem w;
  w.arrival = {Vector::Zero(2), Matrix::Identity(2, 2)};
  for (int j = 0; j < 4; ++j) {
    if (j < 3) {
      w.transition.push_back((Matrix(2, 2) << 1, 0.05, 0, 1).finished());
      w.transition_rhs.push_back(Vector::Zero(2));
      w.process_cov.push_back(Matrix::Identity(2, 2));
    }
    w.output.push_back((Matrix(1, 2) << 1, 0).finished());
    w.output_rhs.push_back(Vector::Zero(1));
    w.measurement_cov.push_back(Matrix::Identity(1, 1));
  }
  const auto sol = solve_kkt(assemble_qp(w));
  EXPECT_EQ(sol.z.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Kkt, MatchesDenseBruteForce) {
  std::mt19937_64 gen(20240611);
  for (int trial = 0; trial < 100; ++trial) {
    const int l = 2 + trial % 2;
    const int n = 1 + (trial / 2) % 2;
    const int p = 1 + (trial / 4) % 2;
    const auto w = random_problem(gen, n, p, l);
    const auto sol = solve_kkt(assemble_qp(w));
    const auto ref = dense_reference(w);
    EXPECT_LE((sol.z - ref.z).cwiseAbs().maxCoeff(), 1e-8) << "trial " << trial;
    EXPECT_LE((sol.multipliers - ref.lambda).cwiseAbs().maxCoeff(), 1e-8) << "trial " << trial;
    EXPECT_LE(sol.kkt_residual, 1e-9);
  }
}

TEST(Kkt, ResidualIsRecomputedIndependently) {
  std::mt19937_64 gen(4);
  const auto qp = assemble_qp(random_problem(gen, 2, 1, 12));
  const auto sol = solve_kkt(qp);
  const Vector stat = Matrix(qp.hessian) * sol.z + qp.linear + Matrix(qp.constraints).transpose() * sol.multipliers;
  const Vector feas = Matrix(qp.constraints) * sol.z - qp.rhs;
  EXPECT_NEAR(sol.kkt_residual, std::max(stat.cwiseAbs().maxCoeff(), feas.cwiseAbs().maxCoeff()), 1e-12);
  EXPECT_LE(feas.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Kkt, RepeatSolveIsBitwiseIdentical) {
  std::mt19937_64 gen(8);
  const auto qp = assemble_qp(random_problem(gen, 2, 1, 10));
  KktSolver solver;
  const auto a = solver.solve(qp);
  const auto b = solver.solve(qp);
  const auto c = solve_kkt(qp);
  EXPECT_TRUE((a.z.array() == b.z.array()).all());
  EXPECT_TRUE((a.z.array() == c.z.array()).all());
}

TEST(Kkt, BandwidthIndependentOfHorizon) {
  std::mt19937_64 gen(12);
  KktSolver solver;
  solver.solve(assemble_qp(random_problem(gen, 2, 1, 4)));
  const int band = solver.bandwidth();
  for (int l : {8, 16, 64}) {
    solver.solve(assemble_qp(random_problem(gen, 2, 1, l)));
    EXPECT_EQ(solver.bandwidth(), band);
  }
}

TEST(Kkt, RankDeficiencyReported) {
  Matrix a(2, 2);
  a << 1, 1, 2, 2;
  const auto qp = EqualityQP::unstructured(2.0 * Matrix::Identity(2, 2), Vector::Zero(2), a, Eigen::Vector2d(1, 2));
  try {
    solve_kkt(qp);
    FAIL() << "expected RankDeficiencyError";
  } catch (const RankDeficiencyError& e) {
    EXPECT_GE(e.pivot(), 0);
    EXPECT_NE(std::string(e.what()).find("pivot"), std::string::npos);
  }
}

TEST(Kkt, IndefiniteReducedHessianReported) {
  // Free direction z2 has no curvature and no constraint.
  Matrix h = Matrix::Zero(2, 2);
  h(0, 0) = 2.0;
  Matrix a(1, 2);
  a << 1, 0;
  EXPECT_THROW(solve_kkt(EqualityQP::unstructured(h, Vector::Zero(2), a, Vector::Ones(1))), RankDeficiencyError);
}

TEST(Kkt, TightToleranceFailsLoudly) {
  std::mt19937_64 gen(13);
  auto w = random_problem(gen, 2, 1, 6);
  for (auto& x : w.output_rhs) x *= 1e12;
  KktOptions opts;
  opts.tolerance = 1e-300;
  EXPECT_THROW(solve_kkt(assemble_qp(w), opts), ConvergenceError);
}

TEST(Triplets, FormatAndContent) {
  const EqualityQP qp = assemble_qp({vscalar(0.1), scalar(1.0)}, {scalar(0.2)}, {scalar(0.4), scalar(0.4)},
                                    {ScdcFactors{scalar(0.9), scalar(0.3)}}, {scalar(2.0), scalar(2.0)},
                                    {vscalar(1.5)}, {vscalar(0.7), vscalar(-0.2)}, 2);
  std::ostringstream os;
  write_triplets(qp, os);
  const std::string s = os.str();
  EXPECT_NE(s.find("# H 5 5\n0 0 2\n"), std::string::npos) << s;
  EXPECT_NE(s.find("# f_lin 5 1\n0 0 -0.20000000000000001\n"), std::string::npos) << s;
  EXPECT_NE(s.find("# A_eq 3 5\n0 0 -0.90000000000000002\n0 1 1\n0 2 -1\n"), std::string::npos) << s;
  EXPECT_NE(s.find("# b_eq 3 1\n"), std::string::npos);
  EXPECT_EQ(s.find('\r'), std::string::npos);
}

TEST(Format, SeventeenSignificantDigits) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(-2.5e-12), "-2.4999999999999998e-12");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}
