#ifndef GRAINS_CALIBRATION_HPP
#define GRAINS_CALIBRATION_HPP

// Offline choice of the motion velocity and the z-score threshold.
//
// Each candidate MV is raked through object-free medium. The force record is
// cut into segments; segment k trains a GP that predicts segment k + 1, and
// the z-scores of every predicted segment are pooled. The MV whose pooled
// z-scores have the smallest RMSE wins; its largest |z| becomes the threshold.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "grains/anomaly.hpp"
#include "grains/geometry.hpp"
#include "grains/trajectory.hpp"

namespace grains {

struct CalibrationConfig {
  std::vector<double> mv_grid{0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  double cr = 0.02;
  double av = 0.01;
  std::size_t segment_length = 1000;
  std::size_t min_segments = 6;
  // Leading samples of every rake that never enter a segment. The online
  // detector never scores its warm-up, so the static-friction onset is kept
  // out of the threshold as well.
  std::size_t discard_head = 1000;
  double sigma_floor = 1e-4;
  WindowModelOptions model{};

  void validate() const {
    require(!mv_grid.empty(), "calibration: mv_grid is empty");
    for (double mv : mv_grid) require(mv > 0.0 && mv <= 1.0, "calibration: mv values must lie in (0, 1]");
    require(segment_length >= 1, "calibration: segment_length must be >= 1");
    require(cr >= 0.0 && av > 0.0, "calibration: needs cr >= 0 and av > 0");
  }
};

struct MvEvaluation {
  double rmse = 0.0;
  double max_abs_z = 0.0;
  std::size_t scored = 0;
};

struct CalibrationRow {
  double mv = 0.0;
  int t_prior = 0;
  double rmse = 0.0;
  double max_abs_z = 0.0;
};

struct CalibrationSelection {
  double mv_star = 0.0;
  int t_star = 0;
  double zs_bar = 0.0;
};

struct CalibrationReport {
  std::vector<CalibrationRow> rows;
  CalibrationSelection selected;
};

/// Pooled z-scores of segment-ahead predictions over one or more rakes.
inline std::vector<double> segment_zscores(std::span<const std::vector<double>> rakes, double t_prior,
                                           const CalibrationConfig& config) {
  const std::size_t seg = config.segment_length;
  std::size_t segments = 0;
  for (const auto& r : rakes) {
    if (r.size() > config.discard_head) segments += (r.size() - config.discard_head) / seg;
  }
  require(segments >= config.min_segments + 1 && segments >= 2,
          "evaluate_mv: trace too short for the configured segments");

  std::vector<double> zs;
  std::optional<gp::KernelSpec> warm;
  for (const auto& r : rakes) {
    if (r.size() <= config.discard_head) continue;
    const std::size_t k_count = (r.size() - config.discard_head) / seg;
    for (std::size_t k = 0; k + 1 < k_count; ++k) {
      const std::size_t begin = config.discard_head + k * seg;
      const std::span<const double> train(r.data() + begin, seg);
      const WindowForecast f = forecast_window(train, begin, seg, t_prior, warm, config.model);
      warm = f.kernel;
      for (std::size_t j = 0; j < seg; ++j) {
        zs.push_back(zscore(r[begin + seg + j], f.posterior.mean[j], f.posterior.std[j], config.sigma_floor));
      }
    }
  }
  return zs;
}

inline MvEvaluation evaluate_mv(std::span<const std::vector<double>> rakes, double t_prior,
                                const CalibrationConfig& config) {
  const std::vector<double> zs = segment_zscores(rakes, t_prior, config);
  return {rmse_zscores(zs), max_abs(zs), zs.size()};
}

inline MvEvaluation evaluate_mv(std::span<const double> trace, double t_prior, const CalibrationConfig& config) {
  const std::vector<std::vector<double>> one{std::vector<double>(trace.begin(), trace.end())};
  return evaluate_mv(std::span<const std::vector<double>>(one), t_prior, config);
}

/// Argmin of RMSE; ties go to the smaller MV. Row order does not matter.
inline CalibrationSelection select_parameters(std::span<const CalibrationRow> rows) {
  require(!rows.empty(), "calibration: no rows to select from");
  const CalibrationRow* best = &rows.front();
  for (const auto& r : rows) {
    if (r.rmse < best->rmse || (r.rmse == best->rmse && r.mv < best->mv)) best = &r;
  }
  return {best->mv, best->t_prior, best->max_abs_z};
}

/// Rows in mv_grid order. `rakes` maps each MV to its object-free force records.
inline CalibrationReport calibrate(const std::map<double, std::vector<std::vector<double>>>& rakes,
                                   const CalibrationConfig& config, const MotionConstants& consts = {}) {
  config.validate();
  CalibrationReport report;
  for (double mv : config.mv_grid) {
    const auto it = rakes.find(mv);
    require(it != rakes.end(), "calibrate: missing trace for a grid MV");
    const int t = periodicity_prior({config.cr, config.av, mv}, consts);
    const MvEvaluation e = evaluate_mv(std::span<const std::vector<double>>(it->second), t, config);
    report.rows.push_back({mv, t, e.rmse, e.max_abs_z});
  }
  report.selected = select_parameters(report.rows);
  return report;
}

/// Selection over precomputed rows (e.g. a published table).
inline CalibrationReport replay(std::vector<CalibrationRow> rows) {
  CalibrationReport report;
  report.rows = std::move(rows);
  report.selected = select_parameters(report.rows);
  return report;
}

}  // namespace grains

#endif  // GRAINS_CALIBRATION_HPP
