#pragma once

// Linear-Gaussian consistency suite: on a linear model every estimator must
// reproduce the textbook Kalman filter.

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "scdmhe/harness/trial.hpp"

namespace scdmhe::harness {

/// Textbook Kalman filter: covariance form, gain from the innovation
/// covariance, no Joseph stabilization.
inline std::vector<Vector> kalman_filter(const LinearModel& model, const NoiseSpec& noise, const TruthRun& truth,
                                         const Vector& x0, const Matrix& P0) {
  const Matrix A = model.a(), B = model.b(), C = model.c();
  std::vector<Vector> out;
  Vector x = x0;
  Matrix P = P0;
  for (std::size_t k = 0; k < truth.measurements.size(); ++k) {
    if (k > 0) {
      x = A * x + B * truth.inputs[k - 1];
      P = A * P * A.transpose() + noise.process(static_cast<int>(k) - 1);
    }
    const Matrix S = C * P * C.transpose() + noise.measurement(static_cast<int>(k));
    const Matrix K = P * C.transpose() * S.inverse();
    x += K * (truth.measurements[k] - C * x);
    P = (Matrix::Identity(P.rows(), P.cols()) - K * C) * P;
    out.push_back(x);
  }
  return out;
}

struct LinearCheckReport {
  std::vector<std::string> lines;
  bool passed = true;
};

struct LinearCheckOptions {
  int seeds = 20;
  int steps = 200;
  double tolerance = 1e-6;
  int max_iterations_after_horizon = 2;
};

/// Runs every enabled estimator on `seeds` trials of the linear model with a
/// filtered arrival anchor and compares terminal estimates with the Kalman
/// filter at every post-horizon step.
inline LinearCheckReport linear_consistency(BenchmarkConfig c, const LinearCheckOptions& opt = {}) {
  c.model_type = "linear";
  c.steps = opt.steps;
  c.trials = opt.seeds;
  c.mhe.anchor = ArrivalAnchor::filtered;
  c.nmhe.window.anchor = ArrivalAnchor::filtered;
  if (c.x0_true.size() != c.linear_a.rows()) c.x0_true = Vector::Zero(c.linear_a.rows());
  if (c.x0_hat.size() != c.linear_a.rows()) c.x0_hat = Vector::Zero(c.linear_a.rows());
  if (c.P0.rows() != c.linear_a.rows()) c.P0 = Matrix::Identity(c.linear_a.rows(), c.linear_a.rows());
  if (c.noise.Q.rows() != c.linear_a.rows()) c.noise.Q = 1e-2 * Matrix::Identity(c.linear_a.rows(), c.linear_a.rows());
  if (c.noise.R.rows() != c.linear_c.rows()) c.noise.R = 0.5 * Matrix::Identity(c.linear_c.rows(), c.linear_c.rows());
  c.validate();

  const LinearModel model(c.linear_a, c.linear_b, c.linear_c);
  LinearCheckReport rep;
  for (EstimatorKind kind : c.estimators) {
    double worst = 0.0;
    int worst_iterations = 0;
    std::string failure;
    for (int s = 0; s < opt.seeds && failure.empty(); ++s) {
      BenchmarkConfig one = c;
      one.estimators = {kind};
      const TrialResult t = run_trial(model, one, s);
      const EstimatorRun& r = t.runs.front();
      if (r.failed) {
        failure = r.error;
        break;
      }
      const auto kf = kalman_filter(model, c.noise, t.truth, c.x0_hat, c.P0);
      for (int k = c.mhe.horizon; k < c.steps; ++k) worst = std::max(worst, (r.estimates[k] - kf[k]).norm());
      for (int i : r.diagnostics.i_star) worst_iterations = std::max(worst_iterations, i);
    }
    const bool ok = failure.empty() && worst <= opt.tolerance &&
                    (kind != EstimatorKind::scdmhe || worst_iterations <= opt.max_iterations_after_horizon);
    std::string line = std::string(ok ? "PASS " : "FAIL ") + std::string(estimator_name(kind));
    if (!failure.empty()) {
      line += " failed: " + failure;
    } else {
      line += " max |x - x_kf| = " + format_double(worst);
      if (kind == EstimatorKind::scdmhe) line += ", max i* = " + std::to_string(worst_iterations);
    }
    rep.lines.push_back(line);
    rep.passed = rep.passed && ok;
  }
  return rep;
}

}  // namespace scdmhe::harness
