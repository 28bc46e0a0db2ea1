#ifndef GRAINS_GP_KERNEL_HPP
#define GRAINS_GP_KERNEL_HPP

#include <cmath>
#include <numbers>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "grains/geometry.hpp"

namespace grains::gp {

/// k(a, b) = variance * exp(-2 sin^2(pi |a - b| / period) / length_scale^2)
struct Periodic {
  double variance = 1.0;
  double length_scale = 1.0;
  double period = 1.0;
};

/// variance on the diagonal of a training set, zero elsewhere.
struct White {
  double noise_variance = 1.0;
};

/// k(a, b) = variance * exp(-|a - b|^2 / (2 length_scale^2))
struct SquaredExp {
  double variance = 1.0;
  double length_scale = 1.0;
};

using KernelTerm = std::variant<Periodic, White, SquaredExp>;

/// A kernel is a sum of terms. Sums of sums flatten into one term list.
struct KernelSpec {
  std::vector<KernelTerm> terms;

  KernelSpec() = default;
  KernelSpec(Periodic p) : terms{p} {}     // NOLINT(google-explicit-constructor)
  KernelSpec(White w) : terms{w} {}        // NOLINT(google-explicit-constructor)
  KernelSpec(SquaredExp s) : terms{s} {}   // NOLINT(google-explicit-constructor)

  friend KernelSpec operator+(KernelSpec a, const KernelSpec& b) {
    a.terms.insert(a.terms.end(), b.terms.begin(), b.terms.end());
    return a;
  }

  void validate() const {
    require(!terms.empty(), "kernel: empty sum");
    for (const auto& t : terms) {
      if (const auto* p = std::get_if<Periodic>(&t)) {
        require(p->variance >= 0.0 && p->length_scale > 0.0 && p->period > 0.0,
                "kernel: periodic needs variance >= 0, length_scale > 0, period > 0");
      } else if (const auto* w = std::get_if<White>(&t)) {
        require(w->noise_variance >= 0.0, "kernel: white noise variance must be >= 0");
      } else {
        const auto& s = std::get<SquaredExp>(t);
        require(s.variance >= 0.0 && s.length_scale > 0.0,
                "kernel: squared-exp needs variance >= 0, length_scale > 0");
      }
    }
  }

  /// Total White variance in the sum.
  [[nodiscard]] double noise_variance() const {
    double v = 0.0;
    for (const auto& t : terms) {
      if (const auto* w = std::get_if<White>(&t)) v += w->noise_variance;
    }
    return v;
  }

  template <class T>
  [[nodiscard]] const T* find() const {
    for (const auto& t : terms) {
      if (const auto* p = std::get_if<T>(&t)) return p;
    }
    return nullptr;
  }
  template <class T>
  T* find() {
    for (auto& t : terms) {
      if (auto* p = std::get_if<T>(&t)) return p;
    }
    return nullptr;
  }
};

inline double squared_distance(double a, double b) { return (a - b) * (a - b); }
inline double squared_distance(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return (a - b).squaredNorm();
}

/// Kernel value between two locations. `same_point` marks a diagonal entry
/// (a training point with itself, or a test point with itself), which is the
/// only place the White term contributes.
template <class Loc>
double kernel_eval(const KernelSpec& spec, const Loc& a, const Loc& b, bool same_point) {
  const double r2 = squared_distance(a, b);
  double k = 0.0;
  for (const auto& term : spec.terms) {
    if (const auto* p = std::get_if<Periodic>(&term)) {
      const double s = std::sin(std::numbers::pi * std::sqrt(r2) / p->period);
      k += p->variance * std::exp(-2.0 * s * s / (p->length_scale * p->length_scale));
    } else if (const auto* w = std::get_if<White>(&term)) {
      if (same_point) k += w->noise_variance;
    } else {
      const auto& se = std::get<SquaredExp>(term);
      k += se.variance * std::exp(-0.5 * r2 / (se.length_scale * se.length_scale));
    }
  }
  return k;
}

/// Gram matrix of a set with itself (White on the diagonal).
template <class Loc>
Eigen::MatrixXd gram(const KernelSpec& spec, const std::vector<Loc>& x) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      k(i, j) = kernel_eval(spec, x[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(j)], i == j);
      k(j, i) = k(i, j);
    }
  }
  return k;
}

/// Cross-covariance rows = a, cols = b (no White contribution).
template <class Loc>
Eigen::MatrixXd cross_gram(const KernelSpec& spec, const std::vector<Loc>& a, const std::vector<Loc>& b) {
  Eigen::MatrixXd k(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kernel_eval(spec, a[i], b[j], false);
    }
  }
  return k;
}

}  // namespace grains::gp

#endif  // GRAINS_GP_KERNEL_HPP
