#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>
#include <vector>

#include "scdmhe/errors.hpp"
#include "scdmhe/harness/trial.hpp"

namespace scdmhe::harness {

struct SummaryRow {
  EstimatorKind kind{};
  Vector rmse;              // pooled over successful trials and post-horizon steps
  double mean_step_ms = 0;  // post-horizon steps, first trial excluded when trials > 1
  int successful_trials = 0;
  double max_kkt_residual = 0.0;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;
  int trials = 0;
  int failed_trials = 0;

  const SummaryRow* find(EstimatorKind kind) const {
    for (const auto& r : rows)
      if (r.kind == kind) return &r;
    return nullptr;
  }
};

struct MonteCarloResult {
  std::vector<TrialResult> trials;  // index order
  SummaryTable summary;
};

class RunError : public Error {
 public:
  using Error::Error;
};

inline int resolve_workers(int requested, int trials) {
  int w = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  return std::clamp(w, 1, std::max(1, trials));
}

/// Trials are claimed from a shared counter; results land in their index slot
/// so aggregation never depends on scheduling.
inline std::vector<TrialResult> run_trials(const BenchmarkConfig& c) {
  std::vector<TrialResult> out(c.trials);
  const AnyModel model = make_model(c);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < c.trials; i = next++) {
      out[i] = std::visit([&](const auto& m) { return run_trial(m, c, i); }, model);
    }
  };
  const int workers = resolve_workers(c.workers, c.trials);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  return out;
}

inline SummaryTable aggregate(const BenchmarkConfig& c, const std::vector<TrialResult>& trials) {
  SummaryTable table;
  table.trials = static_cast<int>(trials.size());
  for (const auto& t : trials)
    if (t.failed()) ++table.failed_trials;

  for (EstimatorKind kind : c.estimators) {
    SummaryRow row;
    row.kind = kind;
    Vector sum = Vector::Zero(c.state_dim());
    long count = 0;
    double seconds = 0.0;
    long timed = 0;
    for (const auto& t : trials) {
      if (t.failed()) continue;
      const EstimatorRun* run = t.find(kind);
      sum += run->squared_error_sum;
      count += run->post_horizon_steps;
      row.max_kkt_residual = std::max(row.max_kkt_residual, run->max_kkt_residual);
      ++row.successful_trials;
      if (trials.size() > 1 && t.index == 0) continue;
      for (std::size_t k = t.horizon; k < run->step_seconds.size(); ++k) {
        seconds += run->step_seconds[k];
        ++timed;
      }
    }
    row.rmse = count > 0 ? Vector((sum / static_cast<double>(count)).cwiseSqrt())
                         : Vector::Constant(c.state_dim(), std::nan(""));
    row.mean_step_ms = c.record_timing && timed > 0 ? 1e3 * seconds / static_cast<double>(timed) : 0.0;
    table.rows.push_back(std::move(row));
  }
  return table;
}

/// Runs all trials and aggregates. More than 10% failed trials is a run error.
inline MonteCarloResult run_monte_carlo(const BenchmarkConfig& c) {
  c.validate();
  MonteCarloResult res;
  res.trials = run_trials(c);
  res.summary = aggregate(c, res.trials);
  if (10 * res.summary.failed_trials > res.summary.trials) {
    std::ostringstream os;
    os << res.summary.failed_trials << " of " << res.summary.trials << " trials failed:";
    for (const auto& t : res.trials) {
      for (const auto& r : t.runs) {
        if (r.failed) os << "\n  trial " << t.index << " " << estimator_name(r.kind) << ": " << r.error;
      }
    }
    throw RunError(os.str());
  }
  return res;
}

}  // namespace scdmhe::harness
