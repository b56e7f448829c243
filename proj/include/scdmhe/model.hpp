#pragma once

// System abstraction shared by every estimator: nonlinear maps, their exact
// state/control-dependent coefficient (SCDC) factors, and Jacobians.
//
//   x_{k+1} = f(x_k, u_k, k) + w_k = A(x_k, u_k, k) x_k + B(x_k, u_k, k) u_k + w_k
//   y_k     = h(x_k, k) + v_k      = C(x_k, k) x_k + v_k

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <sstream>
#include <string>

#include "scdmhe/errors.hpp"

namespace scdmhe {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct ScdcFactors {
  Matrix A;  // n x n
  Matrix B;  // n x m
};

struct Jacobians {
  Matrix state;   // df/dx, n x n
  Matrix output;  // dh/dx, p x n
};

template <class M>
concept SystemModel = requires(const M& model, const Vector& x, const Vector& u, int k) {
  { model.state_dim() } -> std::convertible_to<int>;
  { model.input_dim() } -> std::convertible_to<int>;
  { model.output_dim() } -> std::convertible_to<int>;
  { model.dynamics(x, u, k) } -> std::convertible_to<Vector>;
  { model.measurement(x, k) } -> std::convertible_to<Vector>;
  { model.scdc(x, u, k) } -> std::convertible_to<ScdcFactors>;
  { model.output_matrix(x, k) } -> std::convertible_to<Matrix>;
  { model.jacobians(x, u, k) } -> std::convertible_to<Jacobians>;
};

namespace detail {

inline void require_finite(const Vector& v, int expected, const char* what) {
  if (v.size() != expected) {
    std::ostringstream os;
    os << what << " has dimension " << v.size() << ", expected " << expected;
    throw DimensionError(os.str());
  }
  if (!v.allFinite()) {
    throw DomainError(std::string(what) + " is not finite");
  }
}

}  // namespace detail

// Checked entry points. Models themselves may assume well-formed input.

template <SystemModel M>
Vector eval_dynamics(const M& model, const Vector& x, const Vector& u, int k) {
  detail::require_finite(x, model.state_dim(), "state");
  detail::require_finite(u, model.input_dim(), "input");
  return model.dynamics(x, u, k);
}

template <SystemModel M>
Vector eval_measurement(const M& model, const Vector& x, int k) {
  detail::require_finite(x, model.state_dim(), "state");
  return model.measurement(x, k);
}

template <SystemModel M>
ScdcFactors eval_scdc(const M& model, const Vector& x, const Vector& u, int k) {
  detail::require_finite(x, model.state_dim(), "state");
  detail::require_finite(u, model.input_dim(), "input");
  return model.scdc(x, u, k);
}

template <SystemModel M>
Matrix eval_output_matrix(const M& model, const Vector& x, int k) {
  detail::require_finite(x, model.state_dim(), "state");
  return model.output_matrix(x, k);
}

template <SystemModel M>
Jacobians eval_jacobians(const M& model, const Vector& x, const Vector& u, int k) {
  detail::require_finite(x, model.state_dim(), "state");
  detail::require_finite(u, model.input_dim(), "input");
  return model.jacobians(x, u, k);
}

// ---------------------------------------------------------------------------
// Quadrotor vertical kinematics with a saturating rangefinder
// ---------------------------------------------------------------------------

struct QuadrotorParams {
  double sample_time = 0.05;  // s
  double mass = 1.5;          // kg
  double gravity = 9.81;      // m/s^2
  double drag = 0.25;         // dimensionless
  double saturation = 30.0;   // m, rangefinder limit h_max

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw DomainError(std::string("quadrotor parameter '") + name +
                          "' must be finite and strictly positive");
      }
    };
    positive(sample_time, "sample_time");
    positive(mass, "mass");
    positive(gravity, "gravity");
    positive(drag, "drag");
    positive(saturation, "saturation");
  }
};

/// u_k = g + amplitude * sin(scale * k). scale = 1 uses the integer step
/// directly as the sine argument; scale = T_s gives sin(t_k).
struct ControlSignal {
  double gravity = 9.81;
  double amplitude = 0.5;
  double argument_scale = 1.0;

  double operator()(int k) const {
    if (k < 0) throw DomainError("control signal requested at negative step");
    return gravity + amplitude * std::sin(argument_scale * static_cast<double>(k));
  }
};

/// State x = [z, zdot], input u = thrust per unit mass, output y = h_max tanh(z / h_max).
class QuadrotorModel {
 public:
  // Below this |u| the B factor T_s (1 - g/u) is treated as singular.
  static constexpr double kInputGuard = 1e-6;
  // Below this |z / h_max| the output factor is evaluated by its series.
  static constexpr double kSeriesThreshold = 1e-4;

  QuadrotorModel() = default;
  explicit QuadrotorModel(const QuadrotorParams& params) : params_(params) {
    params_.validate();
  }

  const QuadrotorParams& params() const { return params_; }

  int state_dim() const { return 2; }
  int input_dim() const { return 1; }
  int output_dim() const { return 1; }

  Vector dynamics(const Vector& x, const Vector& u, int /*k*/) const {
    const double ts = params_.sample_time;
    const double zdot = x(1);
    Vector next(2);
    next(0) = x(0) + ts * zdot;
    next(1) = zdot + ts * (u(0) - params_.gravity - drag_ratio() * zdot * std::abs(zdot));
    return next;
  }

  Vector measurement(const Vector& x, int /*k*/) const {
    const double h = params_.saturation;
    Vector y(1);
    y(0) = h * std::tanh(x(0) / h);
    return y;
  }

  ScdcFactors scdc(const Vector& x, const Vector& u, int /*k*/) const {
    if (std::abs(u(0)) < kInputGuard) {
      std::ostringstream os;
      os.precision(17);
      os << "quadrotor B factor T_s(1 - g/u) is singular at input u = " << u(0)
         << " (|u| < " << kInputGuard << ")";
      throw SingularFactorError(os.str());
    }
    const double ts = params_.sample_time;
    ScdcFactors f{Matrix(2, 2), Matrix(2, 1)};
    f.A << 1.0, ts, 0.0, 1.0 - ts * drag_ratio() * std::abs(x(1));
    f.B << 0.0, ts * (1.0 - params_.gravity / u(0));
    return f;
  }

  Matrix output_matrix(const Vector& x, int /*k*/) const {
    Matrix c = Matrix::Zero(1, 2);
    c(0, 0) = saturation_ratio(x(0));
    return c;
  }

  Jacobians jacobians(const Vector& x, const Vector& /*u*/, int /*k*/) const {
    const double ts = params_.sample_time;
    Jacobians j{Matrix(2, 2), Matrix::Zero(1, 2)};
    j.state << 1.0, ts, 0.0, 1.0 - 2.0 * ts * drag_ratio() * std::abs(x(1));
    const double sech = 1.0 / std::cosh(x(0) / params_.saturation);
    j.output(0, 0) = sech * sech;
    return j;
  }

 private:
  double drag_ratio() const { return params_.drag / params_.mass; }

  // (h_max / z) tanh(z / h_max), continuous through z = 0.
  double saturation_ratio(double z) const {
    const double r = z / params_.saturation;
    if (std::abs(r) < kSeriesThreshold) return 1.0 - r * r / 3.0;
    return std::tanh(r) / r;
  }

  QuadrotorParams params_;
};

// ---------------------------------------------------------------------------
// Constant-coefficient linear model. SCDC factors, Jacobians and the true maps
// coincide, which makes it the reference case for Kalman equivalence.
// ---------------------------------------------------------------------------

class LinearModel {
 public:
  LinearModel() : LinearModel(default_a(), default_b(), default_c()) {}

  LinearModel(Matrix a, Matrix b, Matrix c) : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)) {
    if (a_.rows() != a_.cols() || b_.rows() != a_.rows() || c_.cols() != a_.rows()) {
      throw DimensionError("linear model matrices have inconsistent dimensions");
    }
    if (!a_.allFinite() || !b_.allFinite() || !c_.allFinite()) {
      throw DomainError("linear model matrices must be finite");
    }
  }

  /// Quadrotor transition at zdot = 0 with B = [0; T_s] and C = [1, 0].
  static Matrix default_a(double ts = 0.05) { return (Matrix(2, 2) << 1.0, ts, 0.0, 1.0).finished(); }
  static Matrix default_b(double ts = 0.05) { return (Matrix(2, 1) << 0.0, ts).finished(); }
  static Matrix default_c() { return (Matrix(1, 2) << 1.0, 0.0).finished(); }

  const Matrix& a() const { return a_; }
  const Matrix& b() const { return b_; }
  const Matrix& c() const { return c_; }

  int state_dim() const { return static_cast<int>(a_.rows()); }
  int input_dim() const { return static_cast<int>(b_.cols()); }
  int output_dim() const { return static_cast<int>(c_.rows()); }

  Vector dynamics(const Vector& x, const Vector& u, int) const { return a_ * x + b_ * u; }
  Vector measurement(const Vector& x, int) const { return c_ * x; }
  ScdcFactors scdc(const Vector&, const Vector&, int) const { return {a_, b_}; }
  Matrix output_matrix(const Vector&, int) const { return c_; }
  Jacobians jacobians(const Vector&, const Vector&, int) const { return {a_, c_}; }

 private:
  Matrix a_, b_, c_;
};

static_assert(SystemModel<QuadrotorModel>);
static_assert(SystemModel<LinearModel>);

// ---------------------------------------------------------------------------
// Noise covariances
// ---------------------------------------------------------------------------

/// Checks symmetry and positive definiteness; `what` names the matrix in errors.
inline void require_spd(const Matrix& m, const char* what, double eig_floor = 0.0) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw DimensionError(std::string(what) + " must be a non-empty square matrix");
  }
  if (!m.allFinite()) throw CovarianceError(std::string(what) + " is not finite");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw CovarianceError(std::string(what) + " is not symmetric");
  }
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw CovarianceError(std::string(what) + " is not positive definite (Cholesky failed)");
  }
  if (eig_floor > 0.0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= eig_floor) {
      throw CovarianceError(std::string(what) + " has an eigenvalue below tolerance");
    }
  }
}

/// Process and measurement covariances. Constant over time; the step index is
/// accepted so callers can be written against a time-varying interface.
struct NoiseSpec {
  Matrix Q;
  Matrix R;

  const Matrix& process(int /*k*/) const { return Q; }
  const Matrix& measurement(int /*k*/) const { return R; }

  void validate(int n, int p) const {
    if (Q.rows() != n || R.rows() != p) throw DimensionError("noise covariance dimension mismatch");
    require_spd(Q, "process covariance Q", 1e-15);
    require_spd(R, "measurement covariance R", 1e-15);
  }

  static NoiseSpec quadrotor_benchmark() {
    NoiseSpec s;
    s.Q = Eigen::Vector2d(1e-3, 5e-2).asDiagonal();
    s.R = Matrix::Constant(1, 1, 0.5);
    return s;
  }
};

}  // namespace scdmhe
