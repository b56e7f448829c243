#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace scdmhe::detail {

// Dense LU with partial pivoting for a square band matrix with lower bandwidth
// kl and upper bandwidth ku. Row i stores columns [i - kl, i + kl + ku]; the
// extra kl columns hold fill created by row interchanges. Work and storage are
// O(n (kl + ku) kl) and O(n (2 kl + ku + 1)).
class BandedLu {
 public:
  BandedLu() = default;
  BandedLu(int n, int kl, int ku) { reset(n, kl, ku); }

  void reset(int n, int kl, int ku) {
    n_ = n;
    kl_ = kl;
    ku_ = ku;
    width_ = 2 * kl + ku + 1;
    data_.assign(static_cast<std::size_t>(n) * width_, 0.0);
    pivots_.assign(n, 0);
    factored_ = false;
  }

  int size() const { return n_; }
  int lower_bandwidth() const { return kl_; }
  int upper_bandwidth() const { return ku_; }

  // Accumulates into A(i, j); requires -kl <= j - i <= ku.
  void add(int i, int j, double v) { at(i, j) += v; }

  double entry(int i, int j) const {
    const int off = j - i + kl_;
    if (off < 0 || off >= width_) return 0.0;
    return data_[static_cast<std::size_t>(i) * width_ + off];
  }

  // Factors in place. Returns the index of the first exactly-zero pivot or -1.
  int factor() {
    int zero_pivot = -1;
    for (int i = 0; i < n_; ++i) {
      const int last_row = std::min(n_ - 1, i + kl_);
      const int last_col = std::min(n_ - 1, i + kl_ + ku_);
      int p = i;
      double best = std::abs(at(i, i));
      for (int r = i + 1; r <= last_row; ++r) {
        const double v = std::abs(at(r, i));
        if (v > best) {
          best = v;
          p = r;
        }
      }
      pivots_[i] = p;
      if (best == 0.0) {
        if (zero_pivot < 0) zero_pivot = i;
        continue;
      }
      if (p != i) {
        for (int c = i; c <= last_col; ++c) std::swap(at(i, c), at(p, c));
      }
      const double inv = 1.0 / at(i, i);
      for (int r = i + 1; r <= last_row; ++r) {
        double& lri = at(r, i);
        if (lri == 0.0) continue;
        lri *= inv;
        const double l = lri;
        for (int c = i + 1; c <= last_col; ++c) at(r, c) -= l * at(i, c);
      }
    }
    factored_ = true;
    return zero_pivot;
  }

  double pivot(int i) const { return entry(i, i); }

  double max_abs_pivot() const {
    double m = 0.0;
    for (int i = 0; i < n_; ++i) m = std::max(m, std::abs(pivot(i)));
    return m;
  }

  // Overwrites b with A^{-1} b.
  void solve(Eigen::Ref<Eigen::VectorXd> b) const {
    for (int i = 0; i < n_; ++i) {
      const int p = pivots_[i];
      if (p != i) std::swap(b(i), b(p));
      const double bi = b(i);
      if (bi == 0.0) continue;
      const int last_row = std::min(n_ - 1, i + kl_);
      for (int r = i + 1; r <= last_row; ++r) b(r) -= entry(r, i) * bi;
    }
    for (int i = n_ - 1; i >= 0; --i) {
      const int last_col = std::min(n_ - 1, i + kl_ + ku_);
      double s = b(i);
      for (int c = i + 1; c <= last_col; ++c) s -= entry(i, c) * b(c);
      b(i) = s / entry(i, i);
    }
  }

 private:
  double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * width_ + (j - i + kl_)]; }

  int n_ = 0;
  int kl_ = 0;
  int ku_ = 0;
  int width_ = 1;
  std::vector<double> data_;
  std::vector<int> pivots_;
  bool factored_ = false;
};

}  // namespace scdmhe::detail
