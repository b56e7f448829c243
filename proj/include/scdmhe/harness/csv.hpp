#pragma once

// CSV export. Numbers use 17 significant digits, lines end in '\n'.

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>

#include "scdmhe/eqqp.hpp"
#include "scdmhe/errors.hpp"
#include "scdmhe/harness/monte_carlo.hpp"

namespace scdmhe::harness {

class IoError : public Error {
 public:
  using Error::Error;
};

inline void write_summary(std::ostream& os, const SummaryTable& table) {
  os << "estimator,rmse_z_m,rmse_zdot_mps,mean_step_ms\n";
  for (const auto& r : table.rows) {
    os << estimator_name(r.kind) << ',' << format_double(r.rmse(0)) << ','
       << format_double(r.rmse.size() > 1 ? r.rmse(1) : 0.0) << ',' << format_double(r.mean_step_ms) << '\n';
  }
}

inline void write_trajectories(std::ostream& os, const TrialResult& t) {
  os << "k,t_s,z_true,zdot_true,y,u";
  for (const auto& r : t.runs) os << ',' << estimator_name(r.kind) << "_z," << estimator_name(r.kind) << "_zdot";
  os << '\n';
  const int steps = static_cast<int>(t.truth.measurements.size());
  for (int k = 0; k < steps; ++k) {
    const Vector& x = t.truth.states[k];
    os << k << ',' << format_double(k * t.sample_time) << ',' << format_double(x(0)) << ','
       << format_double(x.size() > 1 ? x(1) : 0.0) << ',' << format_double(t.truth.measurements[k](0)) << ','
       << format_double(t.truth.inputs[k](0));
    for (const auto& r : t.runs) {
      if (r.failed || k >= static_cast<int>(r.estimates.size())) {
        os << ",nan,nan";
      } else {
        const Vector& e = r.estimates[k];
        os << ',' << format_double(e(0)) << ',' << format_double(e.size() > 1 ? e(1) : 0.0);
      }
    }
    os << '\n';
  }
}

inline void write_diagnostics(std::ostream& os, const TrialResult& t) {
  os << "k,i_star,delta_final,p_min_eig,p_max_eig,alpha_hat\n";
  const EstimatorRun* r = t.find(EstimatorKind::scdmhe);
  if (!r) return;
  const auto& d = r->diagnostics;
  for (std::size_t i = 0; i < d.k.size(); ++i) {
    os << d.k[i] << ',' << d.i_star[i] << ',' << format_double(d.delta_final[i]) << ','
       << format_double(d.p_min_eig[i]) << ',' << format_double(d.p_max_eig[i]) << ','
       << format_double(d.alpha_hat[i]) << '\n';
  }
}

/// One row per trial and estimator, so per-trial averaging can be recomputed.
inline void write_per_trial(std::ostream& os, const std::vector<TrialResult>& trials) {
  os << "trial,estimator,failed,rmse_z_m,rmse_zdot_mps,max_kkt_residual\n";
  for (const auto& t : trials) {
    for (const auto& r : t.runs) {
      os << t.index << ',' << estimator_name(r.kind) << ',' << (r.failed ? 1 : 0) << ',';
      if (r.failed) {
        os << "nan,nan,nan\n";
      } else {
        os << format_double(r.rmse(0)) << ',' << format_double(r.rmse.size() > 1 ? r.rmse(1) : 0.0) << ','
           << format_double(r.max_kkt_residual) << '\n';
      }
    }
  }
}

namespace detail {

template <class F>
void write_file(const std::filesystem::path& path, F&& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  body(os);
  os.flush();
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

/// Writes summary.csv, per_trial_rmse.csv and the per-trial trajectory and
/// diagnostics files selected by the configuration.
inline void export_csv(const BenchmarkConfig& c, const MonteCarloResult& res, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  detail::write_file(dir / "summary.csv", [&](std::ostream& os) { write_summary(os, res.summary); });
  detail::write_file(dir / "per_trial_rmse.csv", [&](std::ostream& os) { write_per_trial(os, res.trials); });
  for (const auto& t : res.trials) {
    if (c.trajectories == TrajectoryExport::none) break;
    if (c.trajectories == TrajectoryExport::first && t.index > 0) break;
    const std::string idx = std::to_string(t.index);
    detail::write_file(dir / ("trajectories_" + idx + ".csv"), [&](std::ostream& os) { write_trajectories(os, t); });
    detail::write_file(dir / ("diagnostics_" + idx + ".csv"), [&](std::ostream& os) { write_diagnostics(os, t); });
  }
}

}  // namespace scdmhe::harness
