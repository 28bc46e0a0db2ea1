#ifndef GRAINS_BOA_HPP
#define GRAINS_BOA_HPP

// Bayesian optimisation over a planar search area.
//
// Presence (7) and absence (0) reports are regressed with a zero-mean GP using
// a squared-exponential kernel; expected improvement over the best report
// picks the next raking goal from a grid of cell centres.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "grains/geometry.hpp"
#include "grains/gp/gp.hpp"
#include "grains/gp/kernel.hpp"

namespace grains {

inline constexpr double kPresenceLabel = 7.0;
inline constexpr double kAbsenceLabel = 0.0;

struct StiffnessObservation {
  Pose2 pos;
  double value = kAbsenceLabel;
};

struct GridSpec {
  Rect area;
  double resolution = 0.005;

  [[nodiscard]] std::size_t cols() const {
    return static_cast<std::size_t>(std::floor(area.width() / resolution + 1e-9));
  }
  [[nodiscard]] std::size_t rows() const {
    return static_cast<std::size_t>(std::floor(area.height() / resolution + 1e-9));
  }
  [[nodiscard]] std::size_t cells() const { return cols() * rows(); }

  /// Row-major: index = row * cols + col, rows counted from min_y.
  [[nodiscard]] Pose2 center(std::size_t index) const {
    const std::size_t r = index / cols();
    const std::size_t c = index % cols();
    return {area.min_x + (static_cast<double>(c) + 0.5) * resolution,
            area.min_y + (static_cast<double>(r) + 0.5) * resolution};
  }
  [[nodiscard]] std::vector<Pose2> centers() const {
    std::vector<Pose2> out(cells());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = center(i);
    return out;
  }

  void validate() const {
    require(area.valid(), "grid: invalid search area");
    require(resolution > 0.0, "grid: resolution must be > 0");
    require(cols() >= 4 && rows() >= 4, "grid: needs at least 4 cells per side");
  }
};

struct BoaModel {
  gp::SquaredExp kernel{10.0, 0.02};
  double noise_variance = 0.01;
};

struct StiffnessField {
  GridSpec grid;
  std::vector<double> mean;
  std::vector<double> variance;
};

inline Eigen::Vector2d to_vec(Pose2 p) { return {p.x, p.y}; }

/// Merges reports closer than resolution / 2 to an earlier one. The merged
/// report keeps the earlier position and the larger label, so presence wins.
inline std::vector<StiffnessObservation> dedupe(const std::vector<StiffnessObservation>& obs, double resolution) {
  std::vector<StiffnessObservation> out;
  const double radius = 0.5 * resolution;
  for (const auto& o : obs) {
    bool merged = false;
    for (auto& kept : out) {
      if (distance(kept.pos, o.pos) < radius) {
        kept.value = std::max(kept.value, o.value);
        merged = true;
        break;
      }
    }
    if (!merged) out.push_back(o);
  }
  return out;
}

inline gp::KernelSpec boa_kernel(const BoaModel& model) {
  return gp::KernelSpec(model.kernel) + gp::KernelSpec(gp::White{model.noise_variance});
}

using BoaFit = gp::GpFit<Eigen::Vector2d>;

inline BoaFit fit_boa(const std::vector<StiffnessObservation>& obs, const BoaModel& model) {
  std::vector<Eigen::Vector2d> x;
  std::vector<double> y;
  x.reserve(obs.size());
  y.reserve(obs.size());
  for (const auto& o : obs) {
    require(o.pos.finite() && std::isfinite(o.value), "fit_boa: observation must be finite");
    x.push_back(to_vec(o.pos));
    y.push_back(o.value);
  }
  return gp::gp_fit(std::move(x), y, boa_kernel(model), gp::MeanPolicy::Zero);
}

/// Latent posterior (no observation noise) at arbitrary points.
inline gp::GpPosterior boa_predict(const BoaFit& fit, const std::vector<Pose2>& points) {
  std::vector<Eigen::Vector2d> x;
  x.reserve(points.size());
  for (const auto& p : points) x.push_back(to_vec(p));
  return gp::gp_predict(fit, x, gp::PredictTarget::Latent);
}

/// Expected improvement of N(mu, sigma^2) over y_plus; 0 when sigma = 0.
inline double ei(double mu, double sigma, double y_plus) {
  require(sigma >= 0.0, "ei: sigma must be >= 0");
  if (sigma == 0.0) return 0.0;
  const double d = mu - y_plus;
  const double z = d / sigma;
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  return std::max(0.0, d * cdf + sigma * pdf);
}

inline StiffnessField export_field(const BoaFit& fit, const GridSpec& grid) {
  grid.validate();
  const gp::GpPosterior post = boa_predict(fit, grid.centers());
  StiffnessField field{grid, post.mean, {}};
  field.variance.resize(post.std.size());
  for (std::size_t i = 0; i < post.std.size(); ++i) field.variance[i] = post.std[i] * post.std[i];
  return field;
}

/// Best observed label, or the absence label before any report.
inline double incumbent(const std::vector<StiffnessObservation>& obs) {
  double best = kAbsenceLabel;
  for (const auto& o : obs) best = std::max(best, o.value);
  return best;
}

struct Suggestion {
  Pose2 target;
  std::size_t cell = 0;
  double ei = 0.0;
};

/// EI maximiser over the grid. Exact ties go to the lowest row-major index,
/// or to a uniformly drawn tied cell when `tie_break` is given.
inline Suggestion next_target(const std::vector<StiffnessObservation>& obs, const GridSpec& grid,
                              const BoaModel& model = {}, std::mt19937_64* tie_break = nullptr) {
  grid.validate();
  const BoaFit fit = fit_boa(obs, model);
  const double y_plus = incumbent(obs);
  const gp::GpPosterior post = boa_predict(fit, grid.centers());
  double best = -1.0;
  std::vector<std::size_t> tied;
  for (std::size_t i = 0; i < grid.cells(); ++i) {
    const double a = ei(post.mean[i], post.std[i], y_plus);
    if (a > best) {
      best = a;
      tied.assign(1, i);
    } else if (a == best) {
      tied.push_back(i);
    }
  }
  std::size_t pick = tied.front();
  if (tie_break != nullptr && tied.size() > 1) {
    pick = tied[std::uniform_int_distribution<std::size_t>(0, tied.size() - 1)(*tie_break)];
  }
  return {grid.center(pick), pick, best};
}

}  // namespace grains

#endif  // GRAINS_BOA_HPP
