#pragma once

// Reproducible random streams: SplitMix64 for 64-bit words, Box-Muller for
// standard normals, Cholesky factors for correlated Gaussian vectors.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>

#include "scdmhe/model.hpp"

namespace scdmhe::harness {

/// Counter-based SplitMix64 (Steele, Lea, Flood 2014): state advances by the
/// golden-ratio increment and each output is a bijective mix of the counter.
class SplitMix64 {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += kGamma);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on (0, 1]: 53 random mantissa bits, never zero.
  double uniform_open() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

/// seed + trial_index * 0x9E3779B97F4A7C15 (mod 2^64).
constexpr std::uint64_t trial_seed(std::uint64_t base_seed, std::uint64_t trial_index) {
  return base_seed + trial_index * SplitMix64::kGamma;
}

/// Box-Muller: each pair of uniforms (u1, u2) yields
/// sqrt(-2 ln u1) cos(2 pi u2) then sqrt(-2 ln u1) sin(2 pi u2).
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : bits_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = bits_.uniform_open();
    const double u2 = bits_.uniform_open();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// L z with z ~ N(0, I) and L L' = covariance.
  Vector sample(const Matrix& factor) {
    Vector z(factor.cols());
    for (int i = 0; i < z.size(); ++i) z(i) = next();
    return factor * z;
  }

 private:
  SplitMix64 bits_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Lower Cholesky factor of a PSD covariance. Singular (including zero)
/// covariances fall back to a symmetric eigenvalue-clipped root.
inline Matrix covariance_factor(const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (cov + cov.transpose()));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace scdmhe::harness
