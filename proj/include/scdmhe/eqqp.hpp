#pragma once

// Horizon-structured equality-constrained QP
//
//   minimize   1/2 z' H z + f' z
//   subject to A_eq z = b_eq
//
// with z = [chi_0..chi_{l-1}, omega_0..omega_{l-2}, nu_0..nu_{l-1}] and rows
//   dynamics    chi_{j+1} - A_j chi_j - omega_j = d_j      (j < l-1)
//   measurement C_j chi_j + nu_j                 = y_j      (j < l)
// stacked dynamics-first. The objective equals the window cost
//   |chi_0 - x_bar|^2_{P^-1} + sum |omega_j|^2_{Q^-1} + sum |nu_j|^2_{R^-1}
// up to the constant |x_bar|^2_{P^-1}.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "scdmhe/banded_lu.hpp"
#include "scdmhe/errors.hpp"
#include "scdmhe/model.hpp"
#include "scdmhe/window.hpp"

namespace scdmhe {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Per-stage data of one window QP. Dynamics right-hand sides are general so
/// the same assembly serves SCDC iterations (d_j = B_j u_j) and Jacobian
/// linearizations (d_j = f(x_j) - F_j x_j).
struct WindowProblem {
  ArrivalCost arrival;
  std::vector<Matrix> transition;        // A_j, horizon - 1
  std::vector<Vector> transition_rhs;    // d_j, horizon - 1
  std::vector<Matrix> output;            // C_j, horizon
  std::vector<Vector> output_rhs;        // y_j, horizon
  std::vector<Matrix> process_cov;       // Q_j, horizon - 1
  std::vector<Matrix> measurement_cov;   // R_j, horizon
  double regularization = 0.0;           // added to every noise inverse-covariance block
};

struct EqualityQP {
  int n = 0;        // state dimension
  int p = 0;        // output dimension
  int horizon = 0;  // window length l; 0 for a QP without stage structure
  SparseMatrix hessian;
  Vector linear;
  SparseMatrix constraints;
  Vector rhs;

  /// Wraps arbitrary QP data; the solver then keeps the natural ordering.
  static EqualityQP unstructured(const Matrix& H, const Vector& f, const Matrix& A, const Vector& b) {
    if (H.rows() != H.cols() || f.size() != H.rows() || A.cols() != H.rows() || b.size() != A.rows()) {
      throw DimensionError("unstructured QP dimension mismatch");
    }
    EqualityQP qp;
    qp.hessian = H.sparseView();
    qp.linear = f;
    qp.constraints = A.sparseView();
    qp.rhs = b;
    return qp;
  }

  bool structured() const { return horizon > 0; }
  int num_variables() const {
    return structured() ? n * horizon + n * (horizon - 1) + p * horizon : static_cast<int>(hessian.rows());
  }
  int num_constraints() const {
    return structured() ? n * (horizon - 1) + p * horizon : static_cast<int>(constraints.rows());
  }
  int num_dynamics_rows() const { return n * (horizon - 1); }

  int state_offset(int j) const { return j * n; }
  int process_offset(int j) const { return n * horizon + j * n; }
  int meas_offset(int j) const { return n * horizon + n * (horizon - 1) + j * p; }
};

struct QPSolution {
  Vector z;
  Vector multipliers;
  double kkt_residual = 0.0;
  int refinement_passes = 0;
};

struct KktOptions {
  double tolerance = 1e-9;
  int max_refinement = 2;
  double pivot_threshold = 1e-12;  // relative to the largest pivot
};

namespace detail {

inline Matrix checked_inverse(const Matrix& m, const char* what) {
  require_spd(m, what);
  Eigen::LLT<Matrix> llt(m);
  Matrix inv = llt.solve(Matrix::Identity(m.rows(), m.cols()));
  return 0.5 * (inv + inv.transpose());
}

inline void add_block(std::vector<Eigen::Triplet<double>>& t, int row, int col, const Matrix& m,
                      double scale = 1.0) {
  for (int c = 0; c < m.cols(); ++c) {
    for (int r = 0; r < m.rows(); ++r) {
      const double v = scale * m(r, c);
      if (v != 0.0) t.emplace_back(row + r, col + c, v);
    }
  }
}

inline void add_identity(std::vector<Eigen::Triplet<double>>& t, int row, int col, int size,
                         double value) {
  for (int i = 0; i < size; ++i) t.emplace_back(row + i, col + i, value);
}

}  // namespace detail

inline EqualityQP assemble_qp(const WindowProblem& w) {
  const int l = static_cast<int>(w.output.size());
  if (l < 2) throw DimensionError("horizon must be at least 2");
  const int n = static_cast<int>(w.arrival.x_bar.size());
  const int p = static_cast<int>(w.output.front().rows());
  auto expect = [](bool ok, const char* what) {
    if (!ok) throw DimensionError(what);
  };
  expect(static_cast<int>(w.transition.size()) == l - 1, "expected horizon-1 transition matrices");
  expect(static_cast<int>(w.transition_rhs.size()) == l - 1, "expected horizon-1 dynamics offsets");
  expect(static_cast<int>(w.output_rhs.size()) == l, "expected horizon measurements");
  expect(static_cast<int>(w.process_cov.size()) == l - 1, "expected horizon-1 process covariances");
  expect(static_cast<int>(w.measurement_cov.size()) == l, "expected horizon measurement covariances");
  expect(w.arrival.P.rows() == n && w.arrival.P.cols() == n, "arrival covariance dimension mismatch");
  for (int j = 0; j + 1 < l; ++j) {
    expect(w.transition[j].rows() == n && w.transition[j].cols() == n, "transition matrix must be n x n");
    expect(w.transition_rhs[j].size() == n, "dynamics offset must have length n");
    expect(w.process_cov[j].rows() == n, "process covariance must be n x n");
  }
  for (int j = 0; j < l; ++j) {
    expect(w.output[j].rows() == p && w.output[j].cols() == n, "output matrix must be p x n");
    expect(w.output_rhs[j].size() == p, "measurement must have length p");
    expect(w.measurement_cov[j].rows() == p, "measurement covariance must be p x p");
  }
  if (!(w.regularization >= 0.0)) throw DomainError("hessian regularization must be non-negative");

  EqualityQP qp;
  qp.n = n;
  qp.p = p;
  qp.horizon = l;
  const int nz = qp.num_variables();
  const int nc = qp.num_constraints();

  std::vector<Eigen::Triplet<double>> ht;
  const Matrix reg_n = w.regularization * Matrix::Identity(n, n);
  const Matrix reg_p = w.regularization * Matrix::Identity(p, p);
  const Matrix p_inv = detail::checked_inverse(w.arrival.P, "arrival covariance P");
  detail::add_block(ht, 0, 0, p_inv, 2.0);
  for (int j = 0; j + 1 < l; ++j) {
    const Matrix q_inv = detail::checked_inverse(w.process_cov[j], "process covariance Q") + reg_n;
    detail::add_block(ht, qp.process_offset(j), qp.process_offset(j), q_inv, 2.0);
  }
  for (int j = 0; j < l; ++j) {
    const Matrix r_inv = detail::checked_inverse(w.measurement_cov[j], "measurement covariance R") + reg_p;
    detail::add_block(ht, qp.meas_offset(j), qp.meas_offset(j), r_inv, 2.0);
  }
  qp.hessian.resize(nz, nz);
  qp.hessian.setFromTriplets(ht.begin(), ht.end());

  qp.linear = Vector::Zero(nz);
  qp.linear.head(n) = -2.0 * p_inv * w.arrival.x_bar;

  std::vector<Eigen::Triplet<double>> at;
  qp.rhs.resize(nc);
  for (int j = 0; j + 1 < l; ++j) {
    const int row = j * n;
    detail::add_block(at, row, qp.state_offset(j), w.transition[j], -1.0);
    detail::add_identity(at, row, qp.state_offset(j + 1), n, 1.0);
    detail::add_identity(at, row, qp.process_offset(j), n, -1.0);
    qp.rhs.segment(row, n) = w.transition_rhs[j];
  }
  for (int j = 0; j < l; ++j) {
    const int row = qp.num_dynamics_rows() + j * p;
    detail::add_block(at, row, qp.state_offset(j), w.output[j]);
    detail::add_identity(at, row, qp.meas_offset(j), p, 1.0);
    qp.rhs.segment(row, p) = w.output_rhs[j];
  }
  qp.constraints.resize(nc, nz);
  qp.constraints.setFromTriplets(at.begin(), at.end());
  return qp;
}

/// Assembly from SCDC factors: d_j = B_j u_j, measurement targets y_j.
inline EqualityQP assemble_qp(const ArrivalCost& arrival, const std::vector<Matrix>& process_cov,
                              const std::vector<Matrix>& measurement_cov,
                              const std::vector<ScdcFactors>& factors,
                              const std::vector<Matrix>& outputs, const std::vector<Vector>& inputs,
                              const std::vector<Vector>& measurements, int horizon,
                              double regularization = 0.0) {
  if (horizon < 2) throw DimensionError("horizon must be at least 2");
  if (static_cast<int>(factors.size()) != horizon - 1 || static_cast<int>(inputs.size()) != horizon - 1) {
    throw DimensionError("expected horizon-1 SCDC factors and inputs");
  }
  if (static_cast<int>(outputs.size()) != horizon || static_cast<int>(measurements.size()) != horizon) {
    throw DimensionError("expected horizon output matrices and measurements");
  }
  WindowProblem w;
  w.arrival = arrival;
  w.process_cov = process_cov;
  w.measurement_cov = measurement_cov;
  w.output = outputs;
  w.output_rhs = measurements;
  w.regularization = regularization;
  for (int j = 0; j + 1 < horizon; ++j) {
    if (factors[j].B.cols() != inputs[j].size()) throw DimensionError("input dimension mismatch");
    w.transition.push_back(factors[j].A);
    w.transition_rhs.push_back(factors[j].B * inputs[j]);
  }
  return assemble_qp(w);
}

/// max(|H z + f + A' lambda|_inf, |A z - b|_inf), recomputed from the QP data.
inline double kkt_residual(const EqualityQP& qp, const Vector& z, const Vector& multipliers) {
  const Vector stationarity = qp.hessian * z + qp.linear + qp.constraints.transpose() * multipliers;
  const Vector feasibility = qp.constraints * z - qp.rhs;
  return std::max(stationarity.cwiseAbs().maxCoeff(), feasibility.cwiseAbs().maxCoeff());
}

// Solves the bordered system [[H, A'], [A, 0]] [z; lambda] = [-f; b].
// Unknowns are reordered stage by stage (chi_j, nu_j, mu_j, omega_j, lambda_j)
// so the KKT matrix becomes banded with bandwidth independent of the horizon.
class KktSolver {
 public:
  explicit KktSolver(KktOptions options = {}) : options_(options) {}

  const KktOptions& options() const { return options_; }

  QPSolution solve(const EqualityQP& qp) {
    build_ordering(qp);
    const int nz = qp.num_variables();
    const int nc = qp.num_constraints();
    const int dim = nz + nc;

    kkt_.resize(dim, dim);
    {
      std::vector<Eigen::Triplet<double>> t;
      t.reserve(qp.hessian.nonZeros() + 2 * qp.constraints.nonZeros());
      for (int c = 0; c < qp.hessian.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(qp.hessian, c); it; ++it)
          t.emplace_back(it.row(), it.col(), it.value());
      for (int c = 0; c < qp.constraints.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(qp.constraints, c); it; ++it) {
          t.emplace_back(nz + it.row(), it.col(), it.value());
          t.emplace_back(it.col(), nz + it.row(), it.value());
        }
      kkt_.setFromTriplets(t.begin(), t.end());
    }

    int band = 0;
    for (int c = 0; c < kkt_.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(kkt_, c); it; ++it)
        band = std::max(band, std::abs(order_[it.row()] - order_[it.col()]));
    lu_.reset(dim, band, band);
    for (int c = 0; c < kkt_.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(kkt_, c); it; ++it)
        lu_.add(order_[it.row()], order_[it.col()], it.value());

    const int zero = lu_.factor();
    const double max_pivot = lu_.max_abs_pivot();
    for (int i = 0; i < dim; ++i) {
      if (i == zero || std::abs(lu_.pivot(i)) <= options_.pivot_threshold * max_pivot) {
        std::ostringstream os;
        os << "KKT matrix is singular: pivot " << i << " (" << describe(qp, inverse_[i])
           << ") is " << lu_.pivot(i) << " against largest pivot " << max_pivot
           << "; constraints are rank deficient or the reduced Hessian is not positive definite";
        throw RankDeficiencyError(os.str(), i);
      }
    }

    Vector rhs(dim);
    rhs.head(nz) = -qp.linear;
    rhs.tail(nc) = qp.rhs;
    Vector sol = apply_inverse(rhs);

    QPSolution out;
    double residual = kkt_residual(qp, sol.head(nz), sol.tail(nc));
    while (out.refinement_passes < options_.max_refinement &&
           residual > 1e-3 * options_.tolerance) {
      const Vector r = rhs - kkt_ * sol;
      sol += apply_inverse(r);
      ++out.refinement_passes;
      residual = kkt_residual(qp, sol.head(nz), sol.tail(nc));
    }
    if (!(residual <= options_.tolerance)) {
      std::ostringstream os;
      os << "KKT residual " << residual << " exceeds tolerance " << options_.tolerance << " after "
         << out.refinement_passes << " refinement passes";
      throw ConvergenceError(os.str());
    }
    out.z = sol.head(nz);
    out.multipliers = sol.tail(nc);
    out.kkt_residual = residual;
    return out;
  }

  int bandwidth() const { return lu_.lower_bandwidth(); }

 private:
  Vector apply_inverse(const Vector& rhs) const {
    Vector permuted(rhs.size());
    for (int i = 0; i < rhs.size(); ++i) permuted(order_[i]) = rhs(i);
    lu_.solve(permuted);
    Vector out(rhs.size());
    for (int i = 0; i < rhs.size(); ++i) out(i) = permuted(order_[i]);
    return out;
  }

  void build_ordering(const EqualityQP& qp) {
    const int n = qp.n, p = qp.p, l = qp.horizon;
    const int nz = qp.num_variables();
    const int dim = nz + qp.num_constraints();
    order_.assign(dim, -1);
    inverse_.assign(dim, -1);
    if (!qp.structured()) {
      for (int i = 0; i < dim; ++i) order_[i] = inverse_[i] = i;
      return;
    }
    int next = 0;
    auto place = [&](int natural, int count) {
      for (int i = 0; i < count; ++i) {
        order_[natural + i] = next;
        inverse_[next] = natural + i;
        ++next;
      }
    };
    for (int j = 0; j < l; ++j) {
      place(qp.state_offset(j), n);
      place(qp.meas_offset(j), p);
      place(nz + qp.num_dynamics_rows() + j * p, p);
      if (j + 1 < l) {
        place(qp.process_offset(j), n);
        place(nz + j * n, n);
      }
    }
  }

  static std::string describe(const EqualityQP& qp, int natural) {
    const int nz = qp.num_variables();
    std::ostringstream os;
    if (!qp.structured()) {
      if (natural < nz) os << "variable " << natural;
      else os << "constraint row " << natural - nz;
    } else if (natural < qp.n * qp.horizon) {
      os << "state stage " << natural / qp.n << " component " << natural % qp.n;
    } else if (natural < qp.meas_offset(0)) {
      const int r = natural - qp.process_offset(0);
      os << "process noise stage " << r / qp.n << " component " << r % qp.n;
    } else if (natural < nz) {
      const int r = natural - qp.meas_offset(0);
      os << "measurement noise stage " << r / qp.p << " component " << r % qp.p;
    } else if (natural < nz + qp.num_dynamics_rows()) {
      const int r = natural - nz;
      os << "dynamics row stage " << r / qp.n << " component " << r % qp.n;
    } else {
      const int r = natural - nz - qp.num_dynamics_rows();
      os << "measurement row stage " << r / qp.p << " component " << r % qp.p;
    }
    return os.str();
  }

  KktOptions options_;
  std::vector<int> order_;
  std::vector<int> inverse_;
  SparseMatrix kkt_;
  detail::BandedLu lu_;
};

inline QPSolution solve_kkt(const EqualityQP& qp, const KktOptions& options = {}) {
  KktSolver solver(options);
  return solver.solve(qp);
}

// ---------------------------------------------------------------------------
// Debug dump: sparse triplets, 0-based indices, 17 significant digits.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline void write_triplets(const EqualityQP& qp, std::ostream& os) {
  auto dump_sparse = [&](const char* name, const SparseMatrix& m) {
    os << "# " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    std::vector<Eigen::Triplet<double>> t;
    for (int c = 0; c < m.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(m, c); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    std::sort(t.begin(), t.end(), [](const auto& a, const auto& b) {
      return a.row() != b.row() ? a.row() < b.row() : a.col() < b.col();
    });
    for (const auto& e : t) os << e.row() << ' ' << e.col() << ' ' << format_double(e.value()) << '\n';
  };
  auto dump_vector = [&](const char* name, const Vector& v) {
    os << "# " << name << ' ' << v.size() << " 1\n";
    for (int i = 0; i < v.size(); ++i)
      if (v(i) != 0.0) os << i << " 0 " << format_double(v(i)) << '\n';
  };
  dump_sparse("H", qp.hessian);
  dump_vector("f_lin", qp.linear);
  dump_sparse("A_eq", qp.constraints);
  dump_vector("b_eq", qp.rhs);
}

inline void write_triplets(const EqualityQP& qp, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_triplets(qp, os);
  if (!os) throw Error("failed writing '" + path + "'");
}

}  // namespace scdmhe
