#pragma once

#include <cstdint>
#include <vector>

#include "scdmhe/harness/rng.hpp"
#include "scdmhe/model.hpp"

namespace scdmhe::harness {

struct TruthRun {
  std::vector<Vector> states;        // x_0 .. x_N
  std::vector<Vector> measurements;  // y_0 .. y_{N-1}
  std::vector<Vector> inputs;        // u_0 .. u_{N-1}
};

/// u_k broadcast to every input channel.
inline Vector input_at(const ControlSignal& control, int k, int m) {
  return Vector::Constant(m, control(k));
}

/// x_{k+1} = f(x_k, u_k, k) + w_k, y_k = h(x_k, k) + v_k. Per step the stream
/// draws v_k (p normals) and then w_k (n normals).
template <SystemModel Model>
TruthRun simulate_truth(const Model& model, const NoiseSpec& noise, const ControlSignal& control,
                        const Vector& x0, int steps, std::uint64_t seed) {
  GaussianStream rng(seed);
  TruthRun run;
  run.states.reserve(steps + 1);
  run.states.push_back(x0);
  for (int k = 0; k < steps; ++k) {
    const Vector& x = run.states.back();
    const Matrix lr = covariance_factor(noise.measurement(k));
    const Matrix lq = covariance_factor(noise.process(k));
    const Vector u = input_at(control, k, model.input_dim());
    run.inputs.push_back(u);
    run.measurements.push_back(model.measurement(x, k) + rng.sample(lr));
    run.states.push_back(model.dynamics(x, u, k) + rng.sample(lq));
  }
  return run;
}

}  // namespace scdmhe::harness
