#pragma once

// Nonlinear moving-horizon estimator solved by sequential quadratic
// programming. Every inner iteration linearizes f and h with their Jacobians
// around the current trajectory (with affine defect terms, so the constraints
// are first-order expansions rather than exact factorizations), solves the
// same equality QP as the SCDC estimator, and damps the step by halving
// until the window cost decreases.
//
// Noise variables are slack: after each trial step they are re-derived as
// omega_j = chi_{j+1} - f(chi_j) and nu_j = y_j - h(chi_j), so every iterate
// satisfies the nonlinear constraints exactly and the merit function
// (cost plus squared constraint violation) reduces to the window cost.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "scdmhe/arrival.hpp"
#include "scdmhe/eqqp.hpp"
#include "scdmhe/estimator.hpp"
#include "scdmhe/model.hpp"
#include "scdmhe/window.hpp"

namespace scdmhe {

struct SqpConfig {
  EstimatorConfig window{.horizon = 12, .max_iterations = 30};
  int max_halvings = 20;

  void validate() const {
    window.validate();
    if (max_halvings < 0) throw DomainError("max_halvings must be non-negative");
  }
};

/// Nonlinear window cost and the noises implied by a state trajectory.
struct FeasibleWindow {
  WindowEstimate window;
  double cost = 0.0;
  double violation = 0.0;  // sum of squared nonlinear constraint residuals
};

template <SystemModel Model>
FeasibleWindow project_window(const Model& model, const NoiseSpec& noise, const ArrivalCost& arrival,
                                     const std::vector<Vector>& states, const std::vector<Vector>& inputs,
                                     const std::vector<Vector>& measurements, int first_step) {
  const int l = static_cast<int>(states.size());
  FeasibleWindow out;
  out.window.states = states;
  const Vector e0 = states[0] - arrival.x_bar;
  Eigen::LLT<Matrix> p(arrival.P);
  out.cost = e0.dot(p.solve(e0));
  for (int j = 0; j < l; ++j) {
    const int t = first_step + j;
    if (j + 1 < l) {
      Vector w = states[j + 1] - model.dynamics(states[j], inputs[j], t);
      out.cost += w.dot(noise.process(t).llt().solve(w));
      out.window.process_noises.push_back(std::move(w));
    }
    Vector v = measurements[j] - model.measurement(states[j], t);
    out.cost += v.dot(noise.measurement(t).llt().solve(v));
    out.window.meas_noises.push_back(std::move(v));
  }
  for (int j = 0; j + 1 < l; ++j) {
    const int t = first_step + j;
    out.violation += (states[j + 1] - model.dynamics(states[j], inputs[j], t) -
                      out.window.process_noises[j]).squaredNorm();
  }
  for (int j = 0; j < l; ++j) {
    out.violation += (measurements[j] - model.measurement(states[j], first_step + j) -
                      out.window.meas_noises[j]).squaredNorm();
  }
  return out;
}

template <SystemModel Model>
class NonlinearMhe {
 public:
  NonlinearMhe(Model model, NoiseSpec noise, SqpConfig config)
      : model_(std::move(model)), noise_(std::move(noise)), config_(config), solver_(config.window.kkt) {
    config_.validate();
    noise_.validate(model_.state_dim(), model_.output_dim());
  }

  const SqpConfig& config() const { return config_; }
  const StepOutcome& last() const { return *last_; }
  bool initialized() const { return last_.has_value(); }

  void init_first_window(const std::vector<Vector>& trajectory, const std::vector<Vector>& measurements,
                         const std::vector<Vector>& inputs, const Matrix& P0, const Vector& x_bar0) {
    const int l = config_.window.horizon;
    if (static_cast<int>(trajectory.size()) != l || static_cast<int>(measurements.size()) != l ||
        static_cast<int>(inputs.size()) != l - 1) {
      throw DimensionError("first window needs horizon states, horizon measurements, horizon-1 inputs");
    }
    require_spd(P0, "initial covariance P0");
    data_.reset(measurements, inputs);
    window_end_ = l - 1;
    arrival_ = {x_bar0, P0};
    StepOutcome out;
    out.k = l - 1;
    out.window.states = trajectory;
    out.x_hat = trajectory.back();
    out.i_star = config_.window.max_iterations;
    out.arrival = arrival_;
    out.new_arrival = next_arrival(trajectory);
    last_ = std::move(out);
  }

  const StepOutcome& step(const Vector& y, const Vector& u_prev) {
    if (!last_) throw Error("estimator used before init_first_window");
    detail::require_finite(y, model_.output_dim(), "measurement");
    detail::require_finite(u_prev, model_.input_dim(), "input");

    const auto& prev = last_->window.states;
    std::vector<Vector> states(prev.begin() + 1, prev.end());
    states.push_back(eval_dynamics(model_, prev.back(), u_prev, last_->k));
    arrival_ = last_->new_arrival;
    data_.push(y, u_prev);
    ++window_end_;

    const int l = config_.window.horizon;
    const int first = window_end_ + 1 - l;
    const std::vector<Vector> inputs(data_.inputs.begin(), data_.inputs.end());
    const std::vector<Vector> ys(data_.measurements.begin(), data_.measurements.end());

    StepOutcome out;
    out.k = last_->k + 1;
    out.arrival = arrival_;
    auto current = project_window(model_, noise_, arrival_, states, inputs, ys, first);
    int i = 0;
    double delta = std::numeric_limits<double>::infinity();
    while (i < config_.window.max_iterations) {
      ++i;
      const auto sol = solver_.solve(assemble_qp(linearize(states, inputs, ys, first)));
      out.kkt_residuals.push_back(sol.kkt_residual);
      const auto qp_window = WindowEstimate::unflatten(sol.z, model_.state_dim(), model_.output_dim(), l);
      const double full = detail::displacement(qp_window.states, states);

      bool accepted = false;
      if (full < config_.window.tolerance) {
        states = qp_window.states;
        current = project_window(model_, noise_, arrival_, states, inputs, ys, first);
        delta = full;
        accepted = true;
      } else {
        double alpha = 1.0;
        for (int h = 0; h <= config_.max_halvings; ++h, alpha *= 0.5) {
          std::vector<Vector> trial(l);
          for (int j = 0; j < l; ++j) trial[j] = states[j] + alpha * (qp_window.states[j] - states[j]);
          auto candidate = project_window(model_, noise_, arrival_, trial, inputs, ys, first);
          const double merit = candidate.cost + candidate.violation;
          if (std::isfinite(merit) && merit < current.cost + current.violation) {
            delta = alpha * full;
            states = std::move(trial);
            current = std::move(candidate);
            accepted = true;
            break;
          }
        }
      }
      out.displacements.push_back(accepted ? delta : 0.0);
      if (!accepted) {
        out.line_search_failed = true;
        break;
      }
      if (delta < config_.window.tolerance) break;
    }
    out.i_star = i;
    out.window = std::move(current.window);
    out.x_hat = out.window.states.back();
    out.new_arrival = next_arrival(out.window.states);
    last_ = std::move(out);
    return *last_;
  }

 private:
  WindowProblem linearize(const std::vector<Vector>& states, const std::vector<Vector>& inputs,
                          const std::vector<Vector>& ys, int first) const {
    const int l = static_cast<int>(states.size());
    WindowProblem w;
    w.arrival = arrival_;
    w.regularization = config_.window.hessian_regularization;
    for (int j = 0; j < l; ++j) {
      const int t = first + j;
      const Vector u = j + 1 < l ? inputs[j] : Vector::Zero(model_.input_dim());
      const auto jac = eval_jacobians(model_, states[j], u, t);
      if (j + 1 < l) {
        w.transition.push_back(jac.state);
        w.transition_rhs.push_back(eval_dynamics(model_, states[j], u, t) - jac.state * states[j]);
        w.process_cov.push_back(noise_.process(t));
      }
      w.output.push_back(jac.output);
      w.output_rhs.push_back(ys[j] - eval_measurement(model_, states[j], t) + jac.output * states[j]);
      w.measurement_cov.push_back(noise_.measurement(t));
    }
    return w;
  }

  // Jacobian-based Riccati step over the stage this window is about to drop.
  ArrivalCost next_arrival(const std::vector<Vector>& states) const {
    const int t = window_end_ + 1 - config_.window.horizon;
    const Vector& u0 = data_.inputs.front();
    const Vector& y0 = data_.measurements.front();
    const auto jac = eval_jacobians(model_, states.front(), u0, t);
    const Matrix& q = noise_.process(t);
    const Matrix& r = noise_.measurement(t);
    Vector anchor;
    if (config_.window.anchor == ArrivalAnchor::smoothed) {
      anchor = states[1];
    } else {
      const Vector corrected =
          correct_anchor(arrival_, jac.output, r, y0 - eval_measurement(model_, arrival_.x_bar, t));
      anchor = eval_dynamics(model_, corrected, u0, t);
    }
    return update_arrival(arrival_, jac.state, jac.output, q, r, std::move(anchor));
  }

  Model model_;
  NoiseSpec noise_;
  SqpConfig config_;
  KktSolver solver_;
  detail::WindowData data_;
  ArrivalCost arrival_;
  std::optional<StepOutcome> last_;
  int window_end_ = 0;
};

}  // namespace scdmhe
