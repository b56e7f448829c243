#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <exception>
#include <string>
#include <variant>
#include <vector>

#include "scdmhe/diagnostics.hpp"
#include "scdmhe/estimator.hpp"
#include "scdmhe/harness/config.hpp"
#include "scdmhe/harness/rng.hpp"
#include "scdmhe/harness/simulate.hpp"
#include "scdmhe/kalman.hpp"
#include "scdmhe/nmhe.hpp"

namespace scdmhe::harness {

using AnyModel = std::variant<QuadrotorModel, LinearModel>;

inline AnyModel make_model(const BenchmarkConfig& c) {
  if (c.model_type == "linear") return LinearModel(c.linear_a, c.linear_b, c.linear_c);
  return QuadrotorModel(c.quadrotor);
}

/// SCD-MHE internals recorded at each executed step (k >= horizon).
struct MheDiagnostics {
  std::vector<int> k;
  std::vector<int> i_star;
  std::vector<double> delta_final;
  std::vector<double> p_min_eig;
  std::vector<double> p_max_eig;
  std::vector<double> alpha_hat;  // observability along the true trajectory
};

struct EstimatorRun {
  EstimatorKind kind{};
  std::vector<Vector> estimates;     // k = 0 .. N-1
  std::vector<double> step_seconds;  // k = 0 .. N-1; zero where no step ran
  Vector rmse;                       // post-horizon, per state component
  Vector squared_error_sum;          // post-horizon sums, for pooling
  int post_horizon_steps = 0;
  double max_kkt_residual = 0.0;
  int line_search_failures = 0;
  bool failed = false;
  std::string error;
  MheDiagnostics diagnostics;        // SCD-MHE only
};

struct TrialResult {
  int index = 0;
  std::uint64_t seed = 0;
  int horizon = 0;
  double sample_time = 0.0;
  TruthRun truth;
  std::vector<EstimatorRun> runs;      // in configuration order
  std::vector<std::string> timed_scopes;  // labels of every timed region

  bool failed() const {
    for (const auto& r : runs)
      if (r.failed) return true;
    return false;
  }

  const EstimatorRun* find(EstimatorKind kind) const {
    for (const auto& r : runs)
      if (r.kind == kind) return &r;
    return nullptr;
  }
};

namespace detail {

class StepTimer {
 public:
  StepTimer(std::vector<std::string>& scopes, EstimatorKind kind) : scopes_(scopes), kind_(kind) {}

  template <class F>
  double time(F&& body) {
    if (!seen_) {
      scopes_.push_back("step:" + std::string(estimator_name(kind_)));
      seen_ = true;
    }
    const auto t0 = std::chrono::steady_clock::now();
    body();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

 private:
  std::vector<std::string>& scopes_;
  EstimatorKind kind_;
  bool seen_ = false;
};

inline void finish_metrics(EstimatorRun& run, const TruthRun& truth, int horizon) {
  const int n = static_cast<int>(truth.states.front().size());
  const int steps = static_cast<int>(truth.measurements.size());
  run.squared_error_sum = Vector::Zero(n);
  run.post_horizon_steps = 0;
  for (int k = horizon; k < steps; ++k) {
    run.squared_error_sum += (run.estimates[k] - truth.states[k]).cwiseAbs2();
    ++run.post_horizon_steps;
  }
  run.rmse = (run.squared_error_sum / std::max(1, run.post_horizon_steps)).cwiseSqrt();
}

// EKF filtered trajectory: update with y_0 from the prior, then predict/update.
template <SystemModel Model>
std::vector<Vector> ekf_trajectory(const Model& model, const NoiseSpec& noise, const TruthRun& truth,
                                   const GaussianBelief& prior, int steps, std::vector<double>* seconds,
                                   StepTimer* timer) {
  std::vector<Vector> out;
  out.reserve(steps);
  GaussianBelief b = prior;
  for (int k = 0; k < steps; ++k) {
    auto body = [&] {
      b = k == 0 ? ekf_update(b, model, truth.measurements[0], noise.measurement(0), 0).belief
                 : ekf_step(b, model, truth.inputs[k - 1], truth.measurements[k], noise.process(k - 1),
                            noise.measurement(k), k)
                       .belief;
    };
    const double dt = timer ? timer->time(body) : (body(), 0.0);
    if (seconds) seconds->push_back(dt);
    out.push_back(b.mean);
  }
  return out;
}

template <SystemModel Model>
void run_ukf(const Model& model, const BenchmarkConfig& c, const TruthRun& truth, EstimatorRun& run,
             StepTimer& timer) {
  GaussianBelief b{c.x0_hat, c.P0};
  const int steps = static_cast<int>(truth.measurements.size());
  for (int k = 0; k < steps; ++k) {
    run.step_seconds.push_back(timer.time([&] {
      b = k == 0 ? ukf_update(b, model, truth.measurements[0], c.noise.measurement(0), 0, c.ukf).belief
                 : ukf_step(b, model, truth.inputs[k - 1], truth.measurements[k], c.noise.process(k - 1),
                            c.noise.measurement(k), k, c.ukf)
                       .belief;
    }));
    run.estimates.push_back(b.mean);
  }
}

// Shared driver for both moving-horizon estimators. Steps before the horizon
// report the EKF start-up trajectory and are not timed.
template <SystemModel Model, class Estimator>
void run_mhe(Estimator& est, const Model& model, const BenchmarkConfig& c, const TruthRun& truth,
             const std::vector<Vector>& startup, EstimatorRun& run, StepTimer& timer, bool scd) {
  const int l = c.mhe.horizon;
  const int steps = static_cast<int>(truth.measurements.size());
  for (int k = 0; k < l; ++k) {
    run.estimates.push_back(startup[k]);
    run.step_seconds.push_back(0.0);
  }
  est.init_first_window(std::vector<Vector>(startup.begin(), startup.begin() + l),
                        std::vector<Vector>(truth.measurements.begin(), truth.measurements.begin() + l),
                        std::vector<Vector>(truth.inputs.begin(), truth.inputs.begin() + (l - 1)), c.P0,
                        c.x0_hat);
  for (int k = l; k < steps; ++k) {
    const StepOutcome* out = nullptr;
    run.step_seconds.push_back(timer.time([&] { out = &est.step(truth.measurements[k], truth.inputs[k - 1]); }));
    run.estimates.push_back(out->x_hat);
    for (double r : out->kkt_residuals) run.max_kkt_residual = std::max(run.max_kkt_residual, r);
    if (out->line_search_failed) ++run.line_search_failures;
    if (scd) {
      auto& d = run.diagnostics;
      d.k.push_back(k);
      d.i_star.push_back(out->i_star);
      d.delta_final.push_back(out->displacements.back());
      Eigen::SelfAdjointEigenSolver<Matrix> es(out->arrival.P, Eigen::EigenvaluesOnly);
      d.p_min_eig.push_back(es.eigenvalues().minCoeff());
      d.p_max_eig.push_back(es.eigenvalues().maxCoeff());
      d.alpha_hat.push_back(trajectory_gramian(model, c.noise, truth.states, truth.inputs, k, l).alpha_hat);
    }
  }
}

}  // namespace detail

/// Simulates one trial and runs every enabled estimator on the same data.
/// Estimator failures are captured in the corresponding EstimatorRun.
template <SystemModel Model>
TrialResult run_trial(const Model& model, const BenchmarkConfig& c, int trial_index) {
  TrialResult res;
  res.index = trial_index;
  res.seed = trial_seed(c.seed, static_cast<std::uint64_t>(trial_index));
  res.horizon = c.mhe.horizon;
  res.sample_time = c.model_type == "linear" ? 1.0 : c.quadrotor.sample_time;
  res.truth = simulate_truth(model, c.noise, c.control(), c.x0_true, c.steps, res.seed);

  const GaussianBelief prior{c.x0_hat, c.P0};
  std::vector<Vector> startup;
  bool startup_ok = true;
  std::string startup_error;
  const bool need_startup = c.enabled(EstimatorKind::nmhe) || c.enabled(EstimatorKind::scdmhe);
  if (need_startup) {
    try {
      startup = detail::ekf_trajectory(model, c.noise, res.truth, prior, c.mhe.horizon, nullptr, nullptr);
    } catch (const std::exception& e) {
      startup_ok = false;
      startup_error = std::string("EKF start-up: ") + e.what();
    }
  }

  for (EstimatorKind kind : c.estimators) {
    EstimatorRun run;
    run.kind = kind;
    detail::StepTimer timer(res.timed_scopes, kind);
    try {
      switch (kind) {
        case EstimatorKind::ekf:
          run.estimates = detail::ekf_trajectory(model, c.noise, res.truth, prior, c.steps, &run.step_seconds, &timer);
          break;
        case EstimatorKind::ukf:
          detail::run_ukf(model, c, res.truth, run, timer);
          break;
        case EstimatorKind::nmhe: {
          if (!startup_ok) throw Error(startup_error);
          NonlinearMhe<Model> est(model, c.noise, c.nmhe);
          detail::run_mhe(est, model, c, res.truth, startup, run, timer, false);
          break;
        }
        case EstimatorKind::scdmhe: {
          if (!startup_ok) throw Error(startup_error);
          ScdMhe<Model> est(model, c.noise, c.mhe);
          detail::run_mhe(est, model, c, res.truth, startup, run, timer, true);
          break;
        }
      }
      for (const auto& x : run.estimates)
        if (!x.allFinite()) throw Error("estimate became non-finite");
      detail::finish_metrics(run, res.truth, c.mhe.horizon);
    } catch (const std::exception& e) {
      run.failed = true;
      run.error = e.what();
    }
    res.runs.push_back(std::move(run));
  }
  return res;
}

inline TrialResult run_trial(const BenchmarkConfig& c, int trial_index) {
  return std::visit([&](const auto& m) { return run_trial(m, c, trial_index); }, make_model(c));
}

/// Bounds check over one SCD-MHE run: arrival covariance band, error
/// divergence over the post-horizon steps.
inline BoundsLog monitor_run(const TrialResult& trial, const EstimatorRun& run, const BoundsBands& bands = {}) {
  MonitorInput in;
  const int steps = static_cast<int>(trial.truth.measurements.size());
  for (int k = trial.horizon; k < steps; ++k) {
    in.steps.push_back(k);
    in.truth.push_back(trial.truth.states[k]);
    in.estimate.push_back(run.estimates[k]);
  }
  for (std::size_t i = 0; i < run.diagnostics.p_min_eig.size(); ++i) {
    Matrix p = Matrix::Zero(2, 2);
    p(0, 0) = run.diagnostics.p_min_eig[i];
    p(1, 1) = run.diagnostics.p_max_eig[i];
    in.arrival_cov.push_back(p);
  }
  return bounds_monitor(in, bands);
}

}  // namespace scdmhe::harness
