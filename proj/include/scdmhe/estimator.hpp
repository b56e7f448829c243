#pragma once

// Iterated state- and control-dependent moving-horizon estimator.
//
// Each step k warm-starts the window trajectory from step k-1, then repeats
//   1. freeze A, B, C at the current trajectory guess,
//   2. solve the resulting equality QP,
//   3. measure the stacked-state displacement delta,
// until delta < tolerance or max_iterations QPs have been solved. The arrival
// covariance then moves one stage forward through the Riccati recursion.

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "scdmhe/arrival.hpp"
#include "scdmhe/eqqp.hpp"
#include "scdmhe/errors.hpp"
#include "scdmhe/model.hpp"
#include "scdmhe/window.hpp"

namespace scdmhe {

struct EstimatorConfig {
  int horizon = 12;
  int max_iterations = 15;
  double tolerance = 1e-6;
  double hessian_regularization = 0.0;
  ArrivalAnchor anchor = ArrivalAnchor::smoothed;
  KktOptions kkt;

  void validate() const {
    if (horizon < 2) throw DomainError("horizon must be at least 2");
    if (max_iterations < 1) throw DomainError("max_iterations must be at least 1");
    if (!(tolerance > 0.0)) throw DomainError("displacement tolerance must be positive");
    if (!(hessian_regularization >= 0.0)) throw DomainError("hessian regularization must be non-negative");
  }
};

struct StepOutcome {
  int k = 0;
  Vector x_hat;
  WindowEstimate window;
  int i_star = 0;
  std::vector<double> displacements;  // delta_{k|1..i_star}
  std::vector<double> kkt_residuals;  // one per QP solve
  ArrivalCost arrival;                // prior used by this window
  ArrivalCost new_arrival;            // prior for the next window
  bool line_search_failed = false;    // set by the nonlinear baseline only
};

struct IterationResult {
  WindowEstimate window;
  double displacement = 0.0;
  double kkt_residual = 0.0;
};

namespace detail {

/// Sliding buffers of the last `horizon` measurements and `horizon-1` inputs.
struct WindowData {
  std::deque<Vector> measurements;
  std::deque<Vector> inputs;

  void reset(const std::vector<Vector>& ys, const std::vector<Vector>& us) {
    measurements.assign(ys.begin(), ys.end());
    inputs.assign(us.begin(), us.end());
  }

  void push(const Vector& y, const Vector& u) {
    measurements.pop_front();
    measurements.push_back(y);
    inputs.pop_front();
    inputs.push_back(u);
  }
};

inline double displacement(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]).squaredNorm();
  return std::sqrt(s);
}

}  // namespace detail

template <SystemModel Model>
class ScdMhe {
 public:
  ScdMhe(Model model, NoiseSpec noise, EstimatorConfig config)
      : model_(std::move(model)), noise_(std::move(noise)), config_(config), solver_(config.kkt) {
    config_.validate();
    noise_.validate(model_.state_dim(), model_.output_dim());
  }

  const Model& model() const { return model_; }
  const EstimatorConfig& config() const { return config_; }
  bool initialized() const { return last_.has_value(); }
  const StepOutcome& last() const { return *last_; }
  const ArrivalCost& arrival() const { return arrival_; }

  /// Primes the estimator at k = horizon-1 with a trajectory for steps
  /// 0..horizon-1 (typically EKF estimates), the first `horizon` measurements
  /// and the first `horizon-1` inputs. No QP is solved for this window.
  void init_first_window(const std::vector<Vector>& trajectory, const std::vector<Vector>& measurements,
                         const std::vector<Vector>& inputs, const Matrix& P0, const Vector& x_bar0) {
    const int l = config_.horizon;
    if (static_cast<int>(trajectory.size()) != l) {
      std::ostringstream os;
      os << "initial trajectory has " << trajectory.size() << " states, expected horizon " << l;
      throw DimensionError(os.str());
    }
    if (static_cast<int>(measurements.size()) != l || static_cast<int>(inputs.size()) != l - 1) {
      throw DimensionError("first window needs horizon measurements and horizon-1 inputs");
    }
    for (const auto& x : trajectory) detail::require_finite(x, model_.state_dim(), "initial trajectory state");
    if (x_bar0.size() != model_.state_dim()) throw DimensionError("prior mean dimension mismatch");
    require_spd(P0, "initial covariance P0");

    data_.reset(measurements, inputs);
    window_end_ = l - 1;
    arrival_ = {x_bar0, P0};
    StepOutcome out;
    out.k = l - 1;
    out.window.states = trajectory;
    out.x_hat = trajectory.back();
    out.i_star = config_.max_iterations;
    out.arrival = arrival_;
    out.new_arrival = next_arrival(out.window.states);
    last_ = std::move(out);
  }

  /// Shifted previous trajectory with the newest state predicted through f.
  std::vector<Vector> warm_start(const Vector& u_prev) const {
    require_initialized();
    const auto& prev = last_->window.states;
    std::vector<Vector> guess(prev.begin() + 1, prev.end());
    guess.push_back(eval_dynamics(model_, prev.back(), u_prev, last_->k));
    return guess;
  }

  /// One SCDC iteration on the current window data from the given trajectory.
  IterationResult iterate_once(const std::vector<Vector>& trajectory) {
    require_initialized();
    const int l = config_.horizon;
    if (static_cast<int>(trajectory.size()) != l) throw DimensionError("trajectory length must equal horizon");
    const int first = window_start();

    WindowProblem w;
    w.arrival = arrival_;
    w.regularization = config_.hessian_regularization;
    for (int j = 0; j < l; ++j) {
      const int t = first + j;
      if (j + 1 < l) {
        const auto f = eval_scdc(model_, trajectory[j], data_.inputs[j], t);
        w.transition.push_back(f.A);
        w.transition_rhs.push_back(f.B * data_.inputs[j]);
        w.process_cov.push_back(noise_.process(t));
      }
      w.output.push_back(eval_output_matrix(model_, trajectory[j], t));
      w.output_rhs.push_back(data_.measurements[j]);
      w.measurement_cov.push_back(noise_.measurement(t));
    }
    const auto qp = assemble_qp(w);
    const auto sol = solver_.solve(qp);
    IterationResult r;
    r.window = WindowEstimate::unflatten(sol.z, model_.state_dim(), model_.output_dim(), l);
    r.displacement = detail::displacement(r.window.states, trajectory);
    r.kkt_residual = sol.kkt_residual;
    return r;
  }

  /// Processes measurement y_k together with the input u_{k-1}.
  const StepOutcome& step(const Vector& y, const Vector& u_prev) {
    require_initialized();
    detail::require_finite(y, model_.output_dim(), "measurement");
    detail::require_finite(u_prev, model_.input_dim(), "input");

    std::vector<Vector> trajectory = warm_start(u_prev);
    arrival_ = last_->new_arrival;
    data_.push(y, u_prev);
    ++window_end_;

    StepOutcome out;
    out.k = last_->k + 1;
    out.arrival = arrival_;
    int i = 0;
    double delta = std::numeric_limits<double>::infinity();
    do {
      ++i;
      auto it = iterate_once(trajectory);
      delta = it.displacement;
      out.displacements.push_back(delta);
      out.kkt_residuals.push_back(it.kkt_residual);
      trajectory = it.window.states;
      out.window = std::move(it.window);
    } while (!(delta < config_.tolerance) && i < config_.max_iterations);

    out.i_star = i;
    out.x_hat = out.window.states.back();
    out.new_arrival = next_arrival(out.window.states);
    last_ = std::move(out);
    return *last_;
  }

  /// Absolute step of the oldest stage in the buffered window.
  int window_start() const { return window_end_ + 1 - config_.horizon; }

 private:
  void require_initialized() const {
    if (!last_) throw Error("estimator used before init_first_window");
  }

  // Arrival prior for the window after the one whose converged states are
  // given; buffers still hold this window's data.
  ArrivalCost next_arrival(const std::vector<Vector>& states) const {
    const int t = window_start();
    const Vector& u0 = data_.inputs.front();
    const Vector& y0 = data_.measurements.front();
    const auto f = eval_scdc(model_, states.front(), u0, t);
    const Matrix c = eval_output_matrix(model_, states.front(), t);
    const Matrix& q = noise_.process(t);
    const Matrix& r = noise_.measurement(t);
    Vector anchor;
    if (config_.anchor == ArrivalAnchor::smoothed) {
      anchor = states[1];
    } else {
      const Vector corrected = correct_anchor(arrival_, c, r, y0 - c * arrival_.x_bar);
      anchor = f.A * corrected + f.B * u0;
    }
    return update_arrival(arrival_, f.A, c, q, r, std::move(anchor));
  }

  Model model_;
  NoiseSpec noise_;
  EstimatorConfig config_;
  KktSolver solver_;
  detail::WindowData data_;
  ArrivalCost arrival_;
  std::optional<StepOutcome> last_;
  int window_end_ = 0;
};

}  // namespace scdmhe
