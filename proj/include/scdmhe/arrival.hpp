#pragma once

#include <Eigen/Dense>

#include <sstream>

#include "scdmhe/errors.hpp"
#include "scdmhe/model.hpp"
#include "scdmhe/window.hpp"

namespace scdmhe {

/// Where the next window's arrival anchor comes from.
///  - smoothed: the second state of the converged window (shifted forward).
///  - filtered: a measurement-corrected, propagated copy of the current
///    anchor, i.e. the Kalman prior that matches the Riccati covariance.
enum class ArrivalAnchor { smoothed, filtered };

inline constexpr double kCovarianceRepair = 1e-10;

/// Symmetrizes P and nudges it by 1e-10 I when its smallest eigenvalue lies in
/// (-1e-10, 1e-10]. Anything more negative is reported as lost definiteness.
inline Matrix symmetrize_covariance(const Matrix& p) {
  Matrix s = 0.5 * (p + p.transpose());
  if (!s.allFinite()) throw CovarianceError("covariance became non-finite");
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  if (lo <= -kCovarianceRepair) {
    std::ostringstream os;
    os << "covariance lost positive definiteness (smallest eigenvalue " << lo << ")";
    throw CovarianceError(os.str());
  }
  if (lo <= kCovarianceRepair) s += kCovarianceRepair * Matrix::Identity(s.rows(), s.cols());
  if (Eigen::LLT<Matrix>(s).info() != Eigen::Success) {
    throw CovarianceError("covariance is not positive definite after repair");
  }
  return s;
}

/// P' = A P A' - A P C' (C P C' + R)^-1 C P A' + Q
inline Matrix riccati_update(const Matrix& P, const Matrix& A, const Matrix& C, const Matrix& Q,
                             const Matrix& R) {
  const int n = static_cast<int>(P.rows());
  if (A.rows() != n || A.cols() != n || C.cols() != n || Q.rows() != n || R.rows() != C.rows()) {
    throw DimensionError("Riccati update dimension mismatch");
  }
  const Matrix pct = P * C.transpose();
  const Matrix innovation = C * pct + R;
  Eigen::LLT<Matrix> llt(innovation);
  if (llt.info() != Eigen::Success) {
    throw CovarianceError("innovation covariance C P C' + R is not invertible");
  }
  const Matrix apct = A * pct;
  const Matrix next = A * P * A.transpose() - apct * llt.solve(apct.transpose()) + Q;
  return symmetrize_covariance(next);
}

/// Anchor corrected by one measurement with the same gain the Riccati update
/// uses: x_bar + P C' (C P C' + R)^-1 residual.
inline Vector correct_anchor(const ArrivalCost& prev, const Matrix& C, const Matrix& R,
                             const Vector& residual) {
  const Matrix pct = prev.P * C.transpose();
  Eigen::LLT<Matrix> llt(C * pct + R);
  if (llt.info() != Eigen::Success) {
    throw CovarianceError("innovation covariance C P C' + R is not invertible");
  }
  return prev.x_bar + pct * llt.solve(residual);
}

/// Next arrival cost: covariance through the Riccati recursion with the
/// discarded stage's matrices, anchor supplied by the caller.
inline ArrivalCost update_arrival(const ArrivalCost& prev, const Matrix& A_bar, const Matrix& C_bar,
                                  const Matrix& Q, const Matrix& R, Vector next_anchor) {
  if (next_anchor.size() != prev.x_bar.size()) throw DimensionError("arrival anchor dimension mismatch");
  return {std::move(next_anchor), riccati_update(prev.P, A_bar, C_bar, Q, R)};
}

}  // namespace scdmhe
