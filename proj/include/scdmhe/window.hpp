#pragma once

#include <Eigen/Dense>

#include <vector>

#include "scdmhe/errors.hpp"
#include "scdmhe/model.hpp"

namespace scdmhe {

/// Prior anchor and covariance penalizing the first state of a window.
struct ArrivalCost {
  Vector x_bar;
  Matrix P;
};

/// One window's decision vector, split into stages. Stage 0 is the oldest
/// (relative offset 1 - horizon), stage horizon-1 the current step.
/// Flattened order is [states..., process noises..., measurement noises...].
struct WindowEstimate {
  std::vector<Vector> states;          // horizon entries, n each
  std::vector<Vector> process_noises;  // horizon - 1 entries, n each
  std::vector<Vector> meas_noises;     // horizon entries, p each

  int horizon() const { return static_cast<int>(states.size()); }

  Vector flatten() const {
    const int n = states.empty() ? 0 : static_cast<int>(states.front().size());
    const int p = meas_noises.empty() ? 0 : static_cast<int>(meas_noises.front().size());
    const int l = horizon();
    Vector z(n * l + n * (l - 1) + p * l);
    int at = 0;
    for (const auto& s : states) z.segment(at, n) = s, at += n;
    for (const auto& w : process_noises) z.segment(at, n) = w, at += n;
    for (const auto& v : meas_noises) z.segment(at, p) = v, at += p;
    return z;
  }

  static WindowEstimate unflatten(const Vector& z, int n, int p, int horizon) {
    const int l = horizon;
    if (l < 1 || z.size() != n * l + n * (l - 1) + p * l) {
      throw DimensionError("decision vector length does not match window dimensions");
    }
    WindowEstimate w;
    int at = 0;
    for (int j = 0; j < l; ++j, at += n) w.states.push_back(z.segment(at, n));
    for (int j = 0; j + 1 < l; ++j, at += n) w.process_noises.push_back(z.segment(at, n));
    for (int j = 0; j < l; ++j, at += p) w.meas_noises.push_back(z.segment(at, p));
    return w;
  }

  /// Stacked n*horizon state trajectory.
  Vector stacked_states() const { return stack(states); }

  static Vector stack(const std::vector<Vector>& trajectory) {
    if (trajectory.empty()) return {};
    const auto n = trajectory.front().size();
    Vector out(n * static_cast<Eigen::Index>(trajectory.size()));
    for (std::size_t j = 0; j < trajectory.size(); ++j) out.segment(j * n, n) = trajectory[j];
    return out;
  }
};

}  // namespace scdmhe
