#ifndef GRAINS_GP_HYPEROPT_HPP
#define GRAINS_GP_HYPEROPT_HPP

// Marginal-likelihood hyperparameter fitting.
//
// Kernel parameters are flattened in term order (Periodic: variance,
// length_scale, period; White: noise_variance; SquaredExp: variance,
// length_scale) and searched in log space with a bounded Nelder-Mead
// simplex, restarted from the incumbent. Parameters whose lower and upper
// bounds coincide are held fixed.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <type_traits>
#include <vector>

#include "grains/gp/gp.hpp"
#include "grains/gp/kernel.hpp"
#include "grains/gp/periodic_gp.hpp"

namespace grains::gp {

struct ParamBounds {
  std::vector<double> lower;
  std::vector<double> upper;
};

struct OptimizerOptions {
  int restarts = 3;
  int max_evaluations = 300;  // per restart
  double initial_step = 0.25;  // simplex edge, log units
  double tolerance = 1e-8;
};

inline std::vector<double> flatten(const KernelSpec& spec) {
  std::vector<double> out;
  for (const auto& t : spec.terms) {
    if (const auto* p = std::get_if<Periodic>(&t)) {
      out.insert(out.end(), {p->variance, p->length_scale, p->period});
    } else if (const auto* w = std::get_if<White>(&t)) {
      out.push_back(w->noise_variance);
    } else {
      const auto& s = std::get<SquaredExp>(t);
      out.insert(out.end(), {s.variance, s.length_scale});
    }
  }
  return out;
}

inline KernelSpec unflatten(KernelSpec shape, std::span<const double> values) {
  std::size_t i = 0;
  for (auto& t : shape.terms) {
    if (auto* p = std::get_if<Periodic>(&t)) {
      p->variance = values[i++];
      p->length_scale = values[i++];
      p->period = values[i++];
    } else if (auto* w = std::get_if<White>(&t)) {
      w->noise_variance = values[i++];
    } else {
      auto& s = std::get<SquaredExp>(t);
      s.variance = values[i++];
      s.length_scale = values[i++];
    }
  }
  require(i == values.size(), "unflatten: parameter count mismatch");
  return shape;
}

/// Bounds scaled to the data: variances within [1e-6, 10] x var(y), length
/// scales within [0.3, 30] (periodic, in units of the period) or
/// init x [0.1, 10] (squared-exp). With a periodicity prior the period is
/// confined to prior x [0.8, 1.2].
inline ParamBounds default_bounds(const KernelSpec& init, double target_variance,
                                  std::optional<double> period_prior = std::nullopt) {
  const double v = std::max(target_variance, 1e-12);
  ParamBounds b;
  auto add = [&](double lo, double hi) {
    b.lower.push_back(lo);
    b.upper.push_back(hi);
  };
  for (const auto& t : init.terms) {
    if (const auto* p = std::get_if<Periodic>(&t)) {
      add(1e-6 * v, 10.0 * v);
      add(0.3, 30.0);
      const double centre = period_prior.value_or(p->period);
      if (period_prior) {
        add(0.8 * centre, 1.2 * centre);
      } else {
        add(0.5 * centre, 2.0 * centre);
      }
    } else if (std::holds_alternative<White>(t)) {
      add(1e-8 * v, 10.0 * v);
    } else {
      const auto& s = std::get<SquaredExp>(t);
      add(1e-6 * v, 10.0 * v);
      add(0.1 * s.length_scale, 10.0 * s.length_scale);
    }
  }
  return b;
}

struct SimplexResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
};

/// Minimizes f over the box [lower, upper] with a restarted Nelder-Mead simplex.
/// Trial points are projected onto the box.
inline SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                                 std::vector<double> x0, const std::vector<double>& lower,
                                 const std::vector<double>& upper, const OptimizerOptions& options) {
  const std::size_t d = x0.size();
  auto project = [&](std::vector<double>& x) {
    for (std::size_t i = 0; i < d; ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
  };
  auto eval = [&](const std::vector<double>& x, int& count) {
    ++count;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };

  SimplexResult best;
  project(x0);
  best.x = x0;
  best.value = eval(x0, best.evaluations);
  if (d == 0) return best;

  for (int restart = 0; restart < std::max(1, options.restarts); ++restart) {
    std::vector<std::vector<double>> pts(d + 1, best.x);
    std::vector<double> vals(d + 1, best.value);
    for (std::size_t i = 0; i < d; ++i) {
      // Step away from the nearer bound so the vertex stays distinct.
      const double up = best.x[i] + options.initial_step;
      pts[i + 1][i] = up <= upper[i] ? up : best.x[i] - options.initial_step;
      project(pts[i + 1]);
      vals[i + 1] = eval(pts[i + 1], best.evaluations);
    }
    int used = static_cast<int>(d);
    std::vector<std::size_t> order(d + 1);
    while (used < options.max_evaluations) {
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
      const std::size_t lo = order.front();
      const std::size_t hi = order.back();
      const std::size_t second = order[d - 1];
      if (std::abs(vals[hi] - vals[lo]) <= options.tolerance * (std::abs(vals[lo]) + options.tolerance)) break;

      std::vector<double> centroid(d, 0.0);
      for (std::size_t k = 0; k <= d; ++k) {
        if (k == hi) continue;
        for (std::size_t i = 0; i < d; ++i) centroid[i] += pts[k][i] / static_cast<double>(d);
      }
      auto along = [&](double t) {
        std::vector<double> x(d);
        for (std::size_t i = 0; i < d; ++i) x[i] = centroid[i] + t * (pts[hi][i] - centroid[i]);
        project(x);
        return x;
      };

      auto xr = along(-1.0);
      const double fr = eval(xr, best.evaluations);
      ++used;
      if (fr < vals[lo]) {
        auto xe = along(-2.0);
        const double fe = eval(xe, best.evaluations);
        ++used;
        if (fe < fr) {
          pts[hi] = std::move(xe);
          vals[hi] = fe;
        } else {
          pts[hi] = std::move(xr);
          vals[hi] = fr;
        }
      } else if (fr < vals[second]) {
        pts[hi] = std::move(xr);
        vals[hi] = fr;
      } else {
        const bool outside = fr < vals[hi];
        auto xc = along(outside ? -0.5 : 0.5);
        const double fc = eval(xc, best.evaluations);
        ++used;
        if (fc < std::min(fr, vals[hi])) {
          pts[hi] = std::move(xc);
          vals[hi] = fc;
        } else {
          for (std::size_t k = 0; k <= d; ++k) {
            if (k == lo) continue;
            for (std::size_t i = 0; i < d; ++i) pts[k][i] = pts[lo][i] + 0.5 * (pts[k][i] - pts[lo][i]);
            vals[k] = eval(pts[k], best.evaluations);
            ++used;
          }
        }
      }
    }
    const auto it = std::min_element(vals.begin(), vals.end());
    const auto k = static_cast<std::size_t>(it - vals.begin());
    const bool improved = *it < best.value - options.tolerance * (std::abs(best.value) + options.tolerance);
    if (*it < best.value) {
      best.value = *it;
      best.x = pts[k];
    }
    if (restart > 0 && !improved) break;
  }
  return best;
}

namespace detail {

template <class Loc>
double evaluate_lml(const std::vector<Loc>& inputs, const std::vector<double>& targets, const KernelSpec& k,
                    MeanPolicy mean) {
  if constexpr (std::is_same_v<Loc, double>) {
    if (auto pw = PeriodicWhite::from(k)) {
      if (auto fast = PeriodicGp::fit(inputs, targets, *pw, mean)) return fast->log_marginal_likelihood();
    }
  }
  try {
    return log_marginal_likelihood(inputs, targets, k, mean);
  } catch (const IllConditionedKernel&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace detail

/// Log marginal likelihood through the fastest exact route available.
template <class Loc>
double fast_log_marginal_likelihood(const std::vector<Loc>& inputs, const std::vector<double>& targets,
                                    const KernelSpec& k, MeanPolicy mean = MeanPolicy::Empirical) {
  return detail::evaluate_lml(inputs, targets, k, mean);
}

/// Returns a kernel whose LML is at least LML(init) (up to 1e-9); init when
/// nothing better is found or every parameter is pinned by its bounds.
template <class Loc>
KernelSpec optimize_hyperparams(const std::vector<Loc>& inputs, const std::vector<double>& targets,
                                const KernelSpec& init, const ParamBounds& bounds,
                                const OptimizerOptions& options = {}, MeanPolicy mean = MeanPolicy::Empirical) {
  init.validate();
  const std::vector<double> x0 = flatten(init);
  require(bounds.lower.size() == x0.size() && bounds.upper.size() == x0.size(),
          "optimize_hyperparams: bounds do not match the kernel's parameter count");
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    require(bounds.lower[i] > 0.0 && bounds.lower[i] <= bounds.upper[i],
            "optimize_hyperparams: bounds must be positive and ordered");
    require(x0[i] >= bounds.lower[i] * (1 - 1e-12) && x0[i] <= bounds.upper[i] * (1 + 1e-12),
            "optimize_hyperparams: init lies outside the bounds");
    if (bounds.lower[i] < bounds.upper[i]) free.push_back(i);
  }
  if (free.empty()) return init;

  std::vector<double> z0;
  std::vector<double> lo;
  std::vector<double> hi;
  for (auto i : free) {
    z0.push_back(std::log(x0[i]));
    lo.push_back(std::log(bounds.lower[i]));
    hi.push_back(std::log(bounds.upper[i]));
  }
  auto to_kernel = [&](std::span<const double> z) {
    std::vector<double> x = x0;
    for (std::size_t j = 0; j < free.size(); ++j) x[free[j]] = std::exp(z[j]);
    return unflatten(init, x);
  };
  auto objective = [&](std::span<const double> z) {
    return -detail::evaluate_lml(inputs, targets, to_kernel(z), mean);
  };
  const double initial = -objective(z0);
  const SimplexResult r = nelder_mead(objective, z0, lo, hi, options);
  if (-r.value >= initial - 1e-9 && std::isfinite(r.value)) return to_kernel(r.x);
  return init;
}

}  // namespace grains::gp

#endif  // GRAINS_GP_HYPEROPT_HPP
