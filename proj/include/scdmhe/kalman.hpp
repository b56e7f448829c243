#pragma once

// Extended and unscented Kalman filters used as reference estimators.
// Convention: a step at k predicts from k-1 with u_{k-1}, then corrects with y_k.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "scdmhe/arrival.hpp"
#include "scdmhe/errors.hpp"
#include "scdmhe/model.hpp"

namespace scdmhe {

struct GaussianBelief {
  Vector mean;
  Matrix cov;

  void validate() const {
    if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
      throw DimensionError("belief covariance does not match mean dimension");
    }
    if (!mean.allFinite()) throw FilterError("belief mean is not finite");
    if (Eigen::LLT<Matrix>(cov).info() != Eigen::Success) {
      throw FilterError("belief covariance is not positive definite");
    }
  }
};

struct FilterUpdate {
  GaussianBelief belief;
  Matrix gain;
};

namespace detail {

inline Matrix filter_covariance(const Matrix& p) {
  try {
    return symmetrize_covariance(p);
  } catch (const CovarianceError& e) {
    throw FilterError(std::string("filter covariance: ") + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// EKF
// ---------------------------------------------------------------------------

template <SystemModel M>
GaussianBelief ekf_predict(const GaussianBelief& b, const M& model, const Vector& u, const Matrix& Q,
                           int k) {
  const Matrix F = eval_jacobians(model, b.mean, u, k).state;
  return {eval_dynamics(model, b.mean, u, k), detail::filter_covariance(F * b.cov * F.transpose() + Q)};
}

/// Measurement correction with the Joseph-form covariance update.
template <SystemModel M>
FilterUpdate ekf_update(const GaussianBelief& b, const M& model, const Vector& y, const Matrix& R, int k) {
  const int n = model.state_dim();
  const Matrix H = eval_jacobians(model, b.mean, Vector::Zero(model.input_dim()), k).output;
  const Matrix pht = b.cov * H.transpose();
  Eigen::LLT<Matrix> s(H * pht + R);
  if (s.info() != Eigen::Success) throw FilterError("EKF innovation covariance is singular");
  const Matrix K = s.solve(pht.transpose()).transpose();
  const Vector innovation = y - eval_measurement(model, b.mean, k);
  const Matrix ikh = Matrix::Identity(n, n) - K * H;
  FilterUpdate out;
  out.belief.mean = b.mean + K * innovation;
  out.belief.cov = detail::filter_covariance(ikh * b.cov * ikh.transpose() + K * R * K.transpose());
  out.gain = K;
  return out;
}

template <SystemModel M>
FilterUpdate ekf_step(const GaussianBelief& b, const M& model, const Vector& u_prev, const Vector& y,
                      const Matrix& Q, const Matrix& R, int k) {
  return ekf_update(ekf_predict(b, model, u_prev, Q, k - 1), model, y, R, k);
}

// ---------------------------------------------------------------------------
// UKF
// ---------------------------------------------------------------------------

struct UkfParams {
  double alpha = 1e-3;
  double kappa = 0.0;
  double beta = 2.0;

  double lambda(int n) const { return alpha * alpha * (n + kappa) - n; }

  void validate(int n) const {
    if (!(alpha > 0.0)) throw DomainError("UKF alpha must be positive");
    if (!(alpha * alpha * (n + kappa) > 0.0)) throw DomainError("UKF scaling alpha^2 (n + kappa) must be positive");
  }
};

struct SigmaWeights {
  std::vector<double> mean;
  std::vector<double> cov;
};

inline SigmaWeights sigma_weights(int n, const UkfParams& params) {
  const double lambda = params.lambda(n);
  const double scale = n + lambda;
  SigmaWeights w;
  w.mean.assign(2 * n + 1, 0.5 / scale);
  w.cov = w.mean;
  w.mean[0] = lambda / scale;
  w.cov[0] = lambda / scale + (1.0 - params.alpha * params.alpha + params.beta);
  return w;
}

/// Columns x, x + S_i, x - S_i where S S' = (n + lambda) P. Uses Cholesky,
/// falling back to an eigenvalue-clipped symmetric root.
inline std::vector<Vector> sigma_points(const Vector& mean, const Matrix& cov, const UkfParams& params) {
  const int n = static_cast<int>(mean.size());
  const Matrix scaled = (n + params.lambda(n)) * cov;
  Matrix root;
  Eigen::LLT<Matrix> llt(scaled);
  if (llt.info() == Eigen::Success) {
    root = llt.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (scaled + scaled.transpose()));
    if (es.info() != Eigen::Success) throw FilterError("UKF covariance square root failed");
    const Vector clipped = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    root = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
  }
  if (!root.allFinite()) throw FilterError("UKF covariance square root is not finite");
  std::vector<Vector> pts;
  pts.reserve(2 * n + 1);
  pts.push_back(mean);
  for (int i = 0; i < n; ++i) pts.push_back(mean + root.col(i));
  for (int i = 0; i < n; ++i) pts.push_back(mean - root.col(i));
  return pts;
}

namespace detail {

// Weighted mean written as an offset from the central point, which avoids
// cancellation when the central weight is large and negative.
inline Vector weighted_mean(const std::vector<Vector>& pts, const std::vector<double>& w) {
  Vector m = pts[0];
  for (std::size_t i = 1; i < pts.size(); ++i) m += w[i] * (pts[i] - pts[0]);
  return m;
}

}  // namespace detail

template <SystemModel M>
GaussianBelief ukf_predict(const GaussianBelief& b, const M& model, const Vector& u, const Matrix& Q, int k,
                           const UkfParams& params) {
  const int n = model.state_dim();
  params.validate(n);
  const auto w = sigma_weights(n, params);
  auto pts = sigma_points(b.mean, b.cov, params);
  for (auto& x : pts) x = eval_dynamics(model, x, u, k);
  const Vector mean = detail::weighted_mean(pts, w.mean);
  Matrix cov = Q;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vector d = pts[i] - mean;
    cov += w.cov[i] * d * d.transpose();
  }
  return {mean, detail::filter_covariance(cov)};
}

template <SystemModel M>
FilterUpdate ukf_update(const GaussianBelief& b, const M& model, const Vector& y, const Matrix& R, int k,
                        const UkfParams& params) {
  const int n = model.state_dim();
  params.validate(n);
  const auto w = sigma_weights(n, params);
  const auto pts = sigma_points(b.mean, b.cov, params);
  std::vector<Vector> ys;
  ys.reserve(pts.size());
  for (const auto& x : pts) ys.push_back(eval_measurement(model, x, k));
  const Vector y_mean = detail::weighted_mean(ys, w.mean);
  Matrix pyy = R;
  Matrix pxy = Matrix::Zero(n, R.rows());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vector dy = ys[i] - y_mean;
    pyy += w.cov[i] * dy * dy.transpose();
    pxy += w.cov[i] * (pts[i] - b.mean) * dy.transpose();
  }
  Eigen::LLT<Matrix> s(pyy);
  if (s.info() != Eigen::Success) throw FilterError("UKF innovation covariance is singular");
  const Matrix K = s.solve(pxy.transpose()).transpose();
  FilterUpdate out;
  out.belief.mean = b.mean + K * (y - y_mean);
  out.belief.cov = detail::filter_covariance(b.cov - K * pyy * K.transpose());
  out.gain = K;
  return out;
}

template <SystemModel M>
FilterUpdate ukf_step(const GaussianBelief& b, const M& model, const Vector& u_prev, const Vector& y,
                      const Matrix& Q, const Matrix& R, int k, const UkfParams& params) {
  return ukf_update(ukf_predict(b, model, u_prev, Q, k - 1, params), model, y, R, k, params);
}

}  // namespace scdmhe
