#ifndef GRAINS_ANOMALY_HPP
#define GRAINS_ANOMALY_HPP

// Sliding-window jamming detector.
//
// Samples arrive one at a time. After a warm-up of train_window samples the
// detector works in episodes of predict_horizon samples: at the start of each
// episode it fits Periodic + White to the trailing train_window samples
// (hyperparameters warm-started from the previous episode), predicts the whole
// episode, and scores each arriving sample by |z|.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grains/geometry.hpp"
#include "grains/gp/gp.hpp"
#include "grains/gp/hyperopt.hpp"
#include "grains/gp/kernel.hpp"
#include "grains/gp/periodic_gp.hpp"

namespace grains {

/// Two-sided 95% and 99% thresholds of a standard normal score.
inline constexpr double kZ95 = 1.96;
inline constexpr double kZ99 = 2.576;

inline double zscore(double x, double mu, double sigma, double sigma_floor = 1e-4) {
  require(sigma >= 0.0, "zscore: sigma must be >= 0");
  return (x - mu) / std::max(sigma, sigma_floor);
}

inline double rmse_zscores(std::span<const double> zs) {
  require(!zs.empty(), "rmse_zscores: empty list");
  double s = 0.0;
  for (double z : zs) s += z * z;
  return std::sqrt(s / static_cast<double>(zs.size()));
}

inline double max_abs(std::span<const double> zs) {
  double m = 0.0;
  for (double z : zs) m = std::max(m, std::abs(z));
  return m;
}

/// Settings of the per-window GP model shared by the detector and calibration.
struct WindowModelOptions {
  bool optimize = true;
  gp::OptimizerOptions optimizer{};
  // Simplex restarts when the search is warm-started from a previous window.
  int warm_restarts = 1;
  gp::MeanPolicy mean = gp::MeanPolicy::Empirical;
};

struct WindowForecast {
  gp::KernelSpec kernel;
  gp::GpPosterior posterior;
};

namespace detail {

inline double variance_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline gp::KernelSpec clamp_into(const gp::KernelSpec& k, const gp::ParamBounds& b) {
  std::vector<double> x = gp::flatten(k);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], b.lower[i], b.upper[i]);
  return gp::unflatten(k, x);
}

}  // namespace detail

/// Starting kernel for a window when nothing better is known: the window
/// variance split evenly between the periodic pattern and the noise.
inline gp::KernelSpec default_window_kernel(std::span<const double> window, double period_prior) {
  const double v = std::max(detail::variance_of(window), 1e-12);
  return gp::PeriodicWhite{{0.5 * v, 1.0, period_prior}, 0.5 * v}.kernel();
}

/// Fits the window (inputs first_index, first_index + 1, ...) and predicts the
/// next `horizon` indices. `warm` seeds the hyperparameter search.
inline WindowForecast forecast_window(std::span<const double> window, std::size_t first_index, std::size_t horizon,
                                      double period_prior, const std::optional<gp::KernelSpec>& warm,
                                      const WindowModelOptions& options = {}) {
  require(!window.empty(), "forecast_window: empty window");
  std::vector<double> inputs(window.size());
  std::iota(inputs.begin(), inputs.end(), static_cast<double>(first_index));
  std::vector<double> targets(window.begin(), window.end());
  std::vector<double> test(horizon);
  std::iota(test.begin(), test.end(), static_cast<double>(first_index + window.size()));

  const double v = std::max(detail::variance_of(window), 1e-12);
  gp::KernelSpec kernel = warm.value_or(default_window_kernel(window, period_prior));
  if (options.optimize) {
    const gp::ParamBounds bounds = gp::default_bounds(kernel, v, period_prior);
    gp::OptimizerOptions opt = options.optimizer;
    if (warm) opt.restarts = options.warm_restarts;
    kernel = gp::optimize_hyperparams(inputs, targets, detail::clamp_into(kernel, bounds), bounds, opt,
                                      options.mean);
  }

  WindowForecast out;
  out.kernel = kernel;
  if (auto pw = gp::PeriodicWhite::from(kernel)) {
    if (auto fast = gp::PeriodicGp::fit(inputs, targets, *pw, options.mean)) {
      out.posterior = fast->predict(test, gp::PredictTarget::Observation);
      return out;
    }
  }
  out.posterior = gp::gp_predict(gp::gp_fit(inputs, targets, kernel, options.mean), test,
                                 gp::PredictTarget::Observation);
  return out;
}

struct DetectorConfig {
  std::size_t train_window = 2000;
  std::size_t predict_horizon = 1000;
  double zs_threshold = 3.0;
  std::size_t debounce = 1;
  double sigma_floor = 1e-4;
  double periodicity_prior = 439.0;
  // Leading samples dropped before the training window starts filling, so a
  // start-up transient never enters the first fit.
  std::size_t settle = 0;
  WindowModelOptions model{};

  void validate() const {
    require(periodicity_prior >= 1.0, "detector: periodicity_prior must be >= 1");
    require(static_cast<double>(train_window) > periodicity_prior,
            "detector: train_window must exceed the periodicity prior");
    require(predict_horizon >= 1, "detector: predict_horizon must be >= 1");
    require(zs_threshold > 0.0, "detector: zs_threshold must be > 0");
    require(debounce >= 1, "detector: debounce must be >= 1");
    require(sigma_floor > 0.0, "detector: sigma_floor must be > 0");
  }
};

enum class VerdictKind { Normal, JammingWarning };

inline const char* to_string(VerdictKind k) { return k == VerdictKind::Normal ? "normal" : "jamming_warning"; }

struct Verdict {
  VerdictKind kind = VerdictKind::Normal;
  std::size_t iteration = 0;
  double zscore = 0.0;  // signed; the threshold applies to its magnitude
  std::size_t episode = 0;
};

struct EpisodeRecord {
  std::size_t episode = 0;
  std::size_t first_iteration = 0;  // first scored sample
  gp::KernelSpec kernel;
  double fit_ms = 0.0;
};

/// Streaming detector. Feed samples with push(); once a warning has been
/// raised the detector is halted and ignores further input. Iterations count
/// every pushed sample, settled or not.
class Detector {
 public:
  explicit Detector(DetectorConfig config) : config_(std::move(config)) {
    config_.validate();
    history_.reserve(config_.train_window + config_.predict_horizon);
  }

  std::optional<Verdict> push(double drag) {
    if (halted_) return std::nullopt;
    const std::size_t i = next_++;
    if (i < config_.settle) return std::nullopt;
    history_.push_back(drag);
    if (i < config_.settle + config_.train_window) return std::nullopt;

    if (i == episode_start_ + config_.predict_horizon || !forecast_) start_episode(i);

    const std::size_t k = i - episode_start_;
    const double z = zscore(drag, forecast_->posterior.mean[k], forecast_->posterior.std[k], config_.sigma_floor);
    run_ = std::abs(z) >= config_.zs_threshold ? run_ + 1 : 0;
    Verdict v{VerdictKind::Normal, i, z, episodes_.size() - 1};
    if (run_ >= config_.debounce) {
      v.kind = VerdictKind::JammingWarning;
      halted_ = true;
    }
    return v;
  }

  [[nodiscard]] bool halted() const { return halted_; }
  [[nodiscard]] std::size_t consumed() const { return next_; }
  [[nodiscard]] const std::vector<EpisodeRecord>& episodes() const { return episodes_; }
  [[nodiscard]] const DetectorConfig& config() const { return config_; }

 private:
  void start_episode(std::size_t i) {
    // Keep only the trailing training window in memory.
    const std::size_t keep = config_.train_window;
    const std::size_t drop = history_.size() - 1 - keep;
    history_.erase(history_.begin(), history_.begin() + static_cast<std::ptrdiff_t>(drop));
    const std::span<const double> window(history_.data(), keep);

    const auto t0 = std::chrono::steady_clock::now();
    std::optional<gp::KernelSpec> warm;
    if (forecast_) warm = forecast_->kernel;
    forecast_ = forecast_window(window, i - keep, config_.predict_horizon, config_.periodicity_prior, warm,
                                config_.model);
    const auto t1 = std::chrono::steady_clock::now();
    episode_start_ = i;
    episodes_.push_back({episodes_.size(), i, forecast_->kernel,
                         std::chrono::duration<double, std::milli>(t1 - t0).count()});
  }

  DetectorConfig config_;
  std::vector<double> history_;
  std::optional<WindowForecast> forecast_;
  std::vector<EpisodeRecord> episodes_;
  std::size_t next_ = 0;
  std::size_t episode_start_ = 0;
  std::size_t run_ = 0;
  bool halted_ = false;
};

struct DetectionResult {
  std::vector<Verdict> verdicts;
  std::optional<Verdict> warning;
  std::vector<EpisodeRecord> episodes;
  bool warm_up_only = false;  // the stream ended before any sample was scored
  std::size_t consumed = 0;   // samples read before halting

  [[nodiscard]] std::vector<double> zscores() const {
    std::vector<double> z;
    z.reserve(verdicts.size());
    for (const auto& v : verdicts) z.push_back(v.zscore);
    return z;
  }
};

inline DetectionResult run_detector(std::span<const double> stream, const DetectorConfig& config) {
  Detector detector(config);
  DetectionResult result;
  for (double x : stream) {
    if (auto v = detector.push(x)) {
      result.verdicts.push_back(*v);
      if (v->kind == VerdictKind::JammingWarning) {
        result.warning = *v;
        break;
      }
    }
  }
  result.episodes = detector.episodes();
  result.consumed = detector.consumed();
  result.warm_up_only = result.verdicts.empty();
  return result;
}

}  // namespace grains

#endif  // GRAINS_ANOMALY_HPP
