#pragma once

// Runtime checks of the conditions behind the estimator's error bound:
// windowed observability, bounded arrival covariance, bounded SCDC factors
// and a non-diverging estimation error.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "scdmhe/errors.hpp"
#include "scdmhe/model.hpp"

namespace scdmhe {

struct ObservabilityReport {
  Matrix gramian;
  double alpha_hat = 0.0;  // smallest eigenvalue of the gramian
  int window_start = 0;
};

/// O = sum_j Phi_j' C_j' R_j^-1 C_j Phi_j with Phi_0 = I, Phi_{j+1} = A_j Phi_j.
inline ObservabilityReport observability_gramian(const std::vector<Matrix>& transitions,
                                                 const std::vector<Matrix>& outputs,
                                                 const std::vector<Matrix>& measurement_cov, int horizon,
                                                 int window_start = 0) {
  if (horizon < 1 || static_cast<int>(outputs.size()) != horizon ||
      static_cast<int>(measurement_cov.size()) != horizon ||
      static_cast<int>(transitions.size()) != horizon - 1) {
    throw DimensionError("observability gramian needs horizon-1 transitions and horizon outputs/covariances");
  }
  const int n = static_cast<int>(outputs.front().cols());
  Matrix phi = Matrix::Identity(n, n);
  Matrix gramian = Matrix::Zero(n, n);
  for (int j = 0; j < horizon; ++j) {
    const Matrix& c = outputs[j];
    if (c.cols() != n || measurement_cov[j].rows() != c.rows()) {
      throw DimensionError("observability gramian: output/covariance dimension mismatch");
    }
    const Matrix cphi = c * phi;
    gramian += cphi.transpose() * measurement_cov[j].llt().solve(cphi);
    if (j + 1 < horizon) {
      if (transitions[j].rows() != n || transitions[j].cols() != n) {
        throw DimensionError("observability gramian: transition must be n x n");
      }
      phi = transitions[j] * phi;
    }
  }
  gramian = 0.5 * (gramian + gramian.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(gramian, Eigen::EigenvaluesOnly);
  return {gramian, es.eigenvalues().minCoeff(), window_start};
}

/// Gramian with SCDC matrices evaluated along a trajectory (truth or estimate)
/// for the window ending at `window_end`.
template <SystemModel Model>
ObservabilityReport trajectory_gramian(const Model& model, const NoiseSpec& noise,
                                       const std::vector<Vector>& states, const std::vector<Vector>& inputs,
                                       int window_end, int horizon) {
  const int first = window_end + 1 - horizon;
  if (first < 0 || window_end >= static_cast<int>(states.size())) {
    throw DimensionError("trajectory too short for the requested window");
  }
  std::vector<Matrix> a, c, r;
  for (int j = 0; j < horizon; ++j) {
    const int t = first + j;
    if (j + 1 < horizon) a.push_back(model.scdc(states[t], inputs[t], t).A);
    c.push_back(model.output_matrix(states[t], t));
    r.push_back(noise.measurement(t));
  }
  return observability_gramian(a, c, r, horizon, first);
}

// ---------------------------------------------------------------------------
// Bounds monitoring over a completed run
// ---------------------------------------------------------------------------

struct MonitorInput {
  std::vector<int> steps;
  std::vector<Matrix> arrival_cov;    // P used at each step
  std::vector<Matrix> transition;     // A along the estimate
  std::vector<Matrix> output;         // C along the estimate
  std::vector<Vector> truth;
  std::vector<Vector> estimate;
};

struct BoundsBands {
  double p_min = 1e-8;
  double p_max = 1e6;
  double divergence_ratio = 10.0;  // error vs. median of the second half
};

struct BoundsLog {
  std::vector<int> steps;
  std::vector<double> p_min_eig;
  std::vector<double> p_max_eig;
  std::vector<double> a_norm;
  std::vector<double> c_norm;
  std::vector<double> error_norm;
  double sup_error = 0.0;
  double second_half_median = 0.0;
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

inline BoundsLog bounds_monitor(const MonitorInput& in, const BoundsBands& bands = {}) {
  BoundsLog log;
  log.steps = in.steps;
  for (std::size_t i = 0; i < in.arrival_cov.size(); ++i) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(in.arrival_cov[i], Eigen::EigenvaluesOnly);
    log.p_min_eig.push_back(es.eigenvalues().minCoeff());
    log.p_max_eig.push_back(es.eigenvalues().maxCoeff());
    if (!(log.p_min_eig.back() >= bands.p_min) || !(log.p_max_eig.back() <= bands.p_max)) {
      log.violations.push_back("arrival covariance eigenvalues [" + std::to_string(log.p_min_eig.back()) +
                               ", " + std::to_string(log.p_max_eig.back()) + "] outside band at entry " +
                               std::to_string(i));
    }
  }
  for (const auto& a : in.transition) log.a_norm.push_back(spectral_norm(a));
  for (const auto& c : in.output) log.c_norm.push_back(spectral_norm(c));
  for (std::size_t i = 0; i < in.truth.size() && i < in.estimate.size(); ++i) {
    log.error_norm.push_back((in.truth[i] - in.estimate[i]).norm());
  }
  for (double e : log.error_norm) {
    if (!std::isfinite(e)) log.violations.push_back("non-finite estimation error");
  }
  if (!log.error_norm.empty()) {
    log.sup_error = *std::max_element(log.error_norm.begin(), log.error_norm.end());
    const std::vector<double> tail(log.error_norm.begin() + log.error_norm.size() / 2, log.error_norm.end());
    log.second_half_median = median(tail);
    if (!(log.sup_error <= bands.divergence_ratio * log.second_half_median)) {
      log.violations.push_back("estimation error " + std::to_string(log.sup_error) + " exceeds " +
                               std::to_string(bands.divergence_ratio) + "x second-half median " +
                               std::to_string(log.second_half_median));
    }
  }
  for (double v : log.a_norm)
    if (!std::isfinite(v)) log.violations.push_back("non-finite transition norm");
  for (double v : log.c_norm)
    if (!std::isfinite(v)) log.violations.push_back("non-finite output norm");
  return log;
}

}  // namespace scdmhe
