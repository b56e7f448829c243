#pragma once

// Benchmark configuration. Files are flat `section.key = value` lines; `#`
// starts a comment. Vectors and matrices are whitespace-separated numbers,
// matrices in row-major order.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "scdmhe/errors.hpp"
#include "scdmhe/estimator.hpp"
#include "scdmhe/kalman.hpp"
#include "scdmhe/model.hpp"
#include "scdmhe/nmhe.hpp"

namespace scdmhe::harness {

enum class EstimatorKind { ekf, ukf, nmhe, scdmhe };

inline constexpr EstimatorKind kAllEstimators[] = {EstimatorKind::ekf, EstimatorKind::ukf, EstimatorKind::nmhe,
                                                   EstimatorKind::scdmhe};

inline std::string_view estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::ekf: return "ekf";
    case EstimatorKind::ukf: return "ukf";
    case EstimatorKind::nmhe: return "nmhe";
    case EstimatorKind::scdmhe: return "scdmhe";
  }
  return "?";
}

inline EstimatorKind parse_estimator(std::string_view s) {
  for (auto k : kAllEstimators)
    if (estimator_name(k) == s) return k;
  throw ConfigError("unknown estimator '" + std::string(s) + "' (expected ekf, ukf, nmhe or scdmhe)");
}

enum class TrajectoryExport { all, first, none };

struct BenchmarkConfig {
  std::string model_type = "quadrotor";  // quadrotor | linear
  QuadrotorParams quadrotor;
  Matrix linear_a = LinearModel::default_a();
  Matrix linear_b = LinearModel::default_b();
  Matrix linear_c = LinearModel::default_c();
  double control_amplitude = 0.5;
  double control_argument_scale = 1.0;  // 1: sin(k); T_s: sin(k T_s)

  NoiseSpec noise = NoiseSpec::quadrotor_benchmark();

  int steps = 120;
  int trials = 100;
  std::uint64_t seed = 1;
  std::vector<EstimatorKind> estimators{std::begin(kAllEstimators), std::end(kAllEstimators)};
  int workers = 0;  // 0: one per hardware thread

  EstimatorConfig mhe;
  SqpConfig nmhe;
  UkfParams ukf;

  Vector x0_true = Eigen::Vector2d(10.0, 0.0);
  Vector x0_hat = Eigen::Vector2d(100.0, -20.0);
  Matrix P0 = Matrix::Identity(2, 2);

  bool record_timing = true;
  TrajectoryExport trajectories = TrajectoryExport::all;

  bool enabled(EstimatorKind k) const {
    return std::find(estimators.begin(), estimators.end(), k) != estimators.end();
  }

  ControlSignal control() const {
    return {quadrotor.gravity, control_amplitude, control_argument_scale};
  }

  int state_dim() const { return model_type == "linear" ? static_cast<int>(linear_a.rows()) : 2; }

  void validate() const {
    try {
      if (model_type == "quadrotor") {
        quadrotor.validate();
      } else if (model_type == "linear") {
        LinearModel(linear_a, linear_b, linear_c);
      } else {
        throw ConfigError("model.type must be 'quadrotor' or 'linear'");
      }
      const int n = state_dim();
      const int p = model_type == "linear" ? static_cast<int>(linear_c.rows()) : 1;
      noise.validate(n, p);
      mhe.validate();
      nmhe.validate();
      ukf.validate(n);
      if (x0_true.size() != n || x0_hat.size() != n || P0.rows() != n || P0.cols() != n) {
        throw ConfigError("initial state/covariance dimensions do not match the model");
      }
      require_spd(P0, "init.p0");
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    if (steps <= mhe.horizon || steps <= nmhe.window.horizon) throw ConfigError("benchmark.steps must exceed the horizon");
    if (trials < 1) throw ConfigError("benchmark.trials must be at least 1");
    if (workers < 0) throw ConfigError("benchmark.workers must be non-negative");
    if (mhe.horizon != nmhe.window.horizon) throw ConfigError("both moving-horizon estimators share one horizon");
  }

  /// Sets the horizon used by both moving-horizon estimators.
  void set_horizon(int l) {
    mhe.horizon = l;
    nmhe.window.horizon = l;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<double> parse_numbers(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::istringstream is(value);
  std::string tok;
  while (is >> tok) {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw ConfigError("key '" + key + "': cannot parse number '" + tok + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("key '" + key + "': expected at least one number");
  return out;
}

inline double parse_scalar(const std::string& key, const std::string& value) {
  const auto v = parse_numbers(key, value);
  if (v.size() != 1) throw ConfigError("key '" + key + "': expected a single number");
  return v.front();
}

inline int parse_int(const std::string& key, const std::string& value) {
  int v = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + value + "'");
  }
  return v;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  int base = 10;
  std::string_view s = value;
  if (s.starts_with("0x") || s.starts_with("0X")) {
    base = 16;
    s.remove_prefix(2);
  }
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("key '" + key + "': expected an unsigned 64-bit integer, got '" + value + "'");
  }
  return v;
}

inline Vector parse_vector(const std::string& key, const std::string& value) {
  const auto v = parse_numbers(key, value);
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Row-major values; `cols` < 0 means square.
inline Matrix parse_matrix(const std::string& key, const std::string& value, int cols = -1) {
  const auto v = parse_numbers(key, value);
  int c = cols;
  if (c < 0) {
    c = static_cast<int>(std::lround(std::sqrt(static_cast<double>(v.size()))));
    if (c * c != static_cast<int>(v.size())) throw ConfigError("key '" + key + "': expected a square matrix");
  }
  if (c <= 0 || v.size() % c != 0) throw ConfigError("key '" + key + "': entry count does not fit the column count");
  const int r = static_cast<int>(v.size()) / c;
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = v[i * c + j];
  return m;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw ConfigError("key '" + key + "': expected on/off");
}

}  // namespace detail

/// Applies one `section.key = value` assignment.
inline void apply_setting(BenchmarkConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "model.type") c.model_type = value;
  else if (key == "model.sample_time") c.quadrotor.sample_time = parse_scalar(key, value);
  else if (key == "model.mass") c.quadrotor.mass = parse_scalar(key, value);
  else if (key == "model.gravity") c.quadrotor.gravity = parse_scalar(key, value);
  else if (key == "model.drag") c.quadrotor.drag = parse_scalar(key, value);
  else if (key == "model.saturation") c.quadrotor.saturation = parse_scalar(key, value);
  else if (key == "model.control_amplitude") c.control_amplitude = parse_scalar(key, value);
  else if (key == "model.control_argument") {
    if (value == "step") c.control_argument_scale = 1.0;
    else if (value == "time") c.control_argument_scale = c.quadrotor.sample_time;
    else throw ConfigError("model.control_argument must be 'step' or 'time'");
  }
  else if (key == "model.linear_a") c.linear_a = parse_matrix(key, value);
  else if (key == "model.linear_b") c.linear_b = parse_matrix(key, value, 1);
  else if (key == "model.linear_c") c.linear_c = parse_matrix(key, value, static_cast<int>(c.linear_a.rows()));
  else if (key == "noise.q") c.noise.Q = parse_matrix(key, value);
  else if (key == "noise.r") c.noise.R = parse_matrix(key, value);
  else if (key == "benchmark.steps") c.steps = parse_int(key, value);
  else if (key == "benchmark.trials") c.trials = parse_int(key, value);
  else if (key == "benchmark.seed") c.seed = parse_u64(key, value);
  else if (key == "benchmark.workers") c.workers = parse_int(key, value);
  else if (key == "benchmark.estimators") {
    c.estimators.clear();
    std::istringstream is(value);
    std::string tok;
    while (std::getline(is, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) continue;
      const auto k = parse_estimator(tok);
      if (!c.enabled(k)) c.estimators.push_back(k);
    }
  }
  else if (key == "init.x0_true") c.x0_true = parse_vector(key, value);
  else if (key == "init.x0_hat") c.x0_hat = parse_vector(key, value);
  else if (key == "init.p0") c.P0 = parse_matrix(key, value);
  else if (key == "mhe.horizon") c.set_horizon(parse_int(key, value));
  else if (key == "mhe.max_iterations") c.mhe.max_iterations = parse_int(key, value);
  else if (key == "mhe.tolerance") c.mhe.tolerance = parse_scalar(key, value), c.nmhe.window.tolerance = c.mhe.tolerance;
  else if (key == "mhe.hessian_regularization") {
    c.mhe.hessian_regularization = parse_scalar(key, value);
    c.nmhe.window.hessian_regularization = c.mhe.hessian_regularization;
  }
  else if (key == "mhe.kkt_tolerance") c.mhe.kkt.tolerance = c.nmhe.window.kkt.tolerance = parse_scalar(key, value);
  else if (key == "mhe.arrival_anchor") {
    if (value == "smoothed") c.mhe.anchor = ArrivalAnchor::smoothed;
    else if (value == "filtered") c.mhe.anchor = ArrivalAnchor::filtered;
    else throw ConfigError("mhe.arrival_anchor must be 'smoothed' or 'filtered'");
    c.nmhe.window.anchor = c.mhe.anchor;
  }
  else if (key == "nmhe.max_iterations") c.nmhe.window.max_iterations = parse_int(key, value);
  else if (key == "nmhe.max_halvings") c.nmhe.max_halvings = parse_int(key, value);
  else if (key == "ukf.alpha") c.ukf.alpha = parse_scalar(key, value);
  else if (key == "ukf.kappa") c.ukf.kappa = parse_scalar(key, value);
  else if (key == "ukf.beta") c.ukf.beta = parse_scalar(key, value);
  else if (key == "rng.generator") {
    if (value != "splitmix64") throw ConfigError("rng.generator: only 'splitmix64' is supported");
  }
  else if (key == "output.timing") c.record_timing = parse_bool(key, value);
  else if (key == "output.trajectories") {
    if (value == "all") c.trajectories = TrajectoryExport::all;
    else if (value == "first") c.trajectories = TrajectoryExport::first;
    else if (value == "none") c.trajectories = TrajectoryExport::none;
    else throw ConfigError("output.trajectories must be all, first or none");
  }
  else throw ConfigError("unknown configuration key '" + key + "'");
}

inline BenchmarkConfig parse_config(std::istream& is, BenchmarkConfig base = {}) {
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string text = detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'section.key = value'");
    }
    const std::string key = detail::trim(std::string_view(text).substr(0, eq));
    const std::string value = detail::trim(std::string_view(text).substr(eq + 1));
    try {
      apply_setting(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

inline BenchmarkConfig load_config(const std::string& path, BenchmarkConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open configuration file '" + path + "'");
  return parse_config(is, std::move(base));
}

}  // namespace scdmhe::harness
