// Tracks a constant-acceleration cart with SCD-MHE and prints the estimate
// next to the truth every ten steps.

#include <cmath>
#include <cstdio>
#include <vector>

#include "scdmhe/estimator.hpp"
#include "scdmhe/harness/rng.hpp"
#include "scdmhe/kalman.hpp"

int main() {
  using namespace scdmhe;

  const LinearModel model;
  NoiseSpec noise;
  noise.Q = 1e-3 * Matrix::Identity(2, 2);
  noise.R = 0.25 * Matrix::Identity(1, 1);

  EstimatorConfig cfg;
  cfg.horizon = 10;
  ScdMhe<LinearModel> mhe(model, noise, cfg);

  harness::GaussianStream rng(42);
  const Matrix lq = harness::covariance_factor(noise.Q);
  const Matrix lr = harness::covariance_factor(noise.R);

  Vector x = Vector::Zero(2);
  const Vector u = Vector::Constant(1, 0.5);
  const Vector x_bar0 = Vector::Zero(2);
  const Matrix P0 = Matrix::Identity(2, 2);

  // Prime the first window with an EKF pass.
  std::vector<Vector> ys, us, start;
  GaussianBelief b{x_bar0, P0};
  for (int k = 0; k < cfg.horizon; ++k) {
    const Vector y = model.measurement(x, k) + rng.sample(lr);
    b = k == 0 ? ekf_update(b, model, y, noise.R, k).belief : ekf_step(b, model, u, y, noise.Q, noise.R, k).belief;
    ys.push_back(y);
    start.push_back(b.mean);
    if (k + 1 < cfg.horizon) us.push_back(u);
    x = model.dynamics(x, u, k) + rng.sample(lq);
  }
  mhe.init_first_window(start, ys, us, P0, x_bar0);

  std::printf("%4s %10s %10s %10s %10s %3s\n", "k", "z", "z_hat", "zdot", "zdot_hat", "i*");
  for (int k = cfg.horizon; k < 100; ++k) {
    const Vector y = model.measurement(x, k) + rng.sample(lr);
    const auto& out = mhe.step(y, u);
    if (k % 10 == 0) {
      std::printf("%4d %10.4f %10.4f %10.4f %10.4f %3d\n", k, x(0), out.x_hat(0), x(1), out.x_hat(1), out.i_star);
    }
    x = model.dynamics(x, u, k) + rng.sample(lq);
  }
  return 0;
}
