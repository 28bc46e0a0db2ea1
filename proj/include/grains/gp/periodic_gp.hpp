#ifndef GRAINS_GP_PERIODIC_GP_HPP
#define GRAINS_GP_PERIODIC_GP_HPP

// Periodic + White regression on scalar inputs in O(n m^2) instead of O(n^3).
//
// With z = 1 / l^2 the periodic kernel expands into a cosine series through
// the generating function of the modified Bessel functions I_k:
//
//   s^2 exp(-2 sin^2(pi tau / T) / l^2)
//     = s^2 e^-z [ I_0(z) + 2 sum_k I_k(z) cos(2 pi k tau / T) ]
//
// and cos(w (a - b)) = cos(w a) cos(w b) + sin(w a) sin(w b), so the Gram
// matrix is exactly Phi Lambda Phi^T + s_n^2 I with one constant column and a
// cos/sin pair per harmonic. The series is cut where the remaining weights fall
// below 1e-17 of the kernel variance, i.e. beneath double rounding. Fits,
// predictions and the marginal likelihood then go through the Woodbury
// identity with the m x m matrix A = I + D Phi^T Phi D / s_n^2, D = Lambda^1/2.

#include <cmath>
#include <numbers>
#include <optional>
#include <tuple>
#include <utility>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "grains/gp/gp.hpp"
#include "grains/gp/kernel.hpp"

namespace grains::gp {

/// The detector's kernel: periodic pattern plus white measurement noise.
struct PeriodicWhite {
  Periodic periodic;
  double noise_variance = 1.0;

  [[nodiscard]] KernelSpec kernel() const { return KernelSpec(periodic) + KernelSpec(White{noise_variance}); }

  /// Recognises a kernel made of exactly one Periodic and one White term.
  static std::optional<PeriodicWhite> from(const KernelSpec& spec) {
    if (spec.terms.size() != 2) return std::nullopt;
    const auto* p = spec.find<Periodic>();
    const auto* w = spec.find<White>();
    if (p == nullptr || w == nullptr) return std::nullopt;
    return PeriodicWhite{*p, w->noise_variance};
  }
};

inline constexpr double kSpectrumTolerance = 1e-17;
inline constexpr std::size_t kMaxHarmonics = 256;

/// Weights lambda_0..lambda_M with k(tau) = lambda_0 + sum_k lambda_k cos(2 pi k tau / T).
/// Empty when the expansion would need more than kMaxHarmonics terms.
inline std::vector<double> periodic_spectrum(const Periodic& p) {
  const double z = 1.0 / (p.length_scale * p.length_scale);
  if (z > 600.0) return {};  // e^z overflows the unscaled Bessel functions
  const double scale = p.variance * std::exp(-z);
  std::vector<double> weights{scale * std::cyl_bessel_i(0.0, z)};
  for (std::size_t k = 1; k <= kMaxHarmonics; ++k) {
    const double w = 2.0 * scale * std::cyl_bessel_i(static_cast<double>(k), z);
    if (w <= kSpectrumTolerance * p.variance) return weights;
    weights.push_back(w);
  }
  return {};
}

class PeriodicGp {
 public:
  /// Empty optional when the spectrum is too wide or the noise variance is zero;
  /// callers then fall back to the dense solver.
  static std::optional<PeriodicGp> fit(std::span<const double> inputs, std::span<const double> targets,
                                       const PeriodicWhite& kernel, MeanPolicy mean = MeanPolicy::Empirical) {
    kernel.kernel().validate();
    require(inputs.size() == targets.size(), "periodic gp: inputs and targets differ in length");
    require(!inputs.empty(), "periodic gp: needs at least one training point");
    if (!(kernel.noise_variance > 0.0)) return std::nullopt;
    std::vector<double> lambda = periodic_spectrum(kernel.periodic);
    if (lambda.empty()) return std::nullopt;

    PeriodicGp gp;
    gp.kernel_ = kernel;
    gp.origin_ = inputs.front();
    gp.omega_ = 2.0 * std::numbers::pi / kernel.periodic.period;
    gp.harmonics_ = lambda.size() - 1;
    const auto m = static_cast<Eigen::Index>(2 * gp.harmonics_ + 1);
    gp.sqrt_weights_.resize(m);
    gp.sqrt_weights_(0) = std::sqrt(lambda[0]);
    for (std::size_t k = 1; k <= gp.harmonics_; ++k) {
      const double s = std::sqrt(lambda[k]);
      gp.sqrt_weights_(static_cast<Eigen::Index>(2 * k - 1)) = s;
      gp.sqrt_weights_(static_cast<Eigen::Index>(2 * k)) = s;
    }

    const auto n = static_cast<Eigen::Index>(inputs.size());
    double offset = 0.0;
    if (mean == MeanPolicy::Empirical) {
      for (double y : targets) offset += y;
      offset /= static_cast<double>(n);
    }
    gp.offset_ = offset;
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = targets[static_cast<std::size_t>(i)] - offset;

    const double s2 = kernel.noise_variance;
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m);
    Eigen::VectorXd b(m);
    if (const auto h = uniform_spacing(inputs)) {
      // Equally spaced inputs: Phi^T Phi from closed-form trigonometric sums.
      a += gp.uniform_gram(inputs.size(), *h) / s2;
      b = gp.project(inputs, y, *h);
    } else {
      const Eigen::MatrixXd phi = gp.features(inputs);  // n x m, already scaled by D
      a.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose(), 1.0 / s2);
      a.triangularView<Eigen::StrictlyUpper>() = a.transpose();
      b = phi.transpose() * y;
    }
    gp.llt_.compute(a);
    if (gp.llt_.info() != Eigen::Success) return std::nullopt;

    gp.weight_mean_ = gp.llt_.solve(b) / s2;
    const double quad = (y.squaredNorm() - b.dot(gp.weight_mean_)) / s2;
    const double logdet = static_cast<double>(n) * std::log(s2) +
                          2.0 * gp.llt_.matrixLLT().diagonal().array().log().sum();
    gp.lml_ = -0.5 * quad - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    gp.n_ = inputs.size();
    return gp;
  }

  [[nodiscard]] GpPosterior predict(std::span<const double> test,
                                    PredictTarget target = PredictTarget::Observation) const {
    GpPosterior post;
    post.mean.resize(test.size());
    post.std.resize(test.size());
    const Eigen::MatrixXd phi = features(test);
    const Eigen::VectorXd mu = phi * weight_mean_;
    Eigen::MatrixXd v = phi.transpose();
    llt_.matrixL().solveInPlace(v);
    const Eigen::VectorXd var_f = v.colwise().squaredNorm().transpose();
    const double noise = target == PredictTarget::Observation ? kernel_.noise_variance : 0.0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto e = static_cast<Eigen::Index>(i);
      post.mean[i] = offset_ + mu(e);
      post.std[i] = std::sqrt(std::max(0.0, var_f(e) + noise));
    }
    return post;
  }

  [[nodiscard]] double log_marginal_likelihood() const { return lml_; }
  [[nodiscard]] const PeriodicWhite& kernel() const { return kernel_; }
  [[nodiscard]] std::size_t harmonics() const { return harmonics_; }
  [[nodiscard]] std::size_t size() const { return n_; }
  [[nodiscard]] double offset() const { return offset_; }

 private:
  PeriodicGp() = default;

  /// Spacing h when t_i = t_0 + i h for all i (up to rounding).
  static std::optional<double> uniform_spacing(std::span<const double> t) {
    if (t.size() < 2) return std::nullopt;
    const double h = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
    if (!(h > 0.0)) return std::nullopt;
    const double tol = 1e-12 * std::max(std::abs(t.front()), std::abs(t.back())) + 1e-12 * h;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (std::abs(t[i] - (t.front() + static_cast<double>(i) * h)) > tol) return std::nullopt;
    }
    return h;
  }

  /// sum_{i<n} cos(i phi) and sum_{i<n} sin(i phi).
  static std::pair<double, double> trig_sums(std::size_t n, double phi) {
    const double half = std::sin(0.5 * phi);
    const double dn = static_cast<double>(n);
    if (std::abs(half) > 1e-3) {
      const double ratio = std::sin(0.5 * dn * phi) / half;
      const double mid = 0.5 * (dn - 1.0) * phi;
      return {ratio * std::cos(mid), ratio * std::sin(mid)};
    }
    double c = 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      c += std::cos(static_cast<double>(i) * phi);
      s += std::sin(static_cast<double>(i) * phi);
    }
    return {c, s};
  }

  /// D Phi^T Phi D for n inputs spaced h apart.
  [[nodiscard]] Eigen::MatrixXd uniform_gram(std::size_t n, double h) const {
    const std::size_t hm = harmonics_;
    std::vector<double> cs(2 * hm + 1);
    std::vector<double> sn(2 * hm + 1);
    for (std::size_t j = 0; j <= 2 * hm; ++j) {
      std::tie(cs[j], sn[j]) = trig_sums(n, static_cast<double>(j) * omega_ * h);
    }
    auto c = [&](long j) { return cs[static_cast<std::size_t>(std::abs(j))]; };
    auto s = [&](long j) { return j < 0 ? -sn[static_cast<std::size_t>(-j)] : sn[static_cast<std::size_t>(j)]; };
    const auto m = sqrt_weights_.size();
    Eigen::MatrixXd g(m, m);
    g(0, 0) = static_cast<double>(n);
    for (long p = 1; p <= static_cast<long>(hm); ++p) {
      const auto cp = static_cast<Eigen::Index>(2 * p - 1);
      g(0, cp) = g(cp, 0) = c(p);
      g(0, cp + 1) = g(cp + 1, 0) = s(p);
      for (long q = 1; q <= static_cast<long>(hm); ++q) {
        const auto cq = static_cast<Eigen::Index>(2 * q - 1);
        g(cp, cq) = 0.5 * (c(p - q) + c(p + q));
        g(cp + 1, cq + 1) = 0.5 * (c(p - q) - c(p + q));
        g(cp, cq + 1) = 0.5 * (s(p + q) + s(q - p));
        g(cq + 1, cp) = g(cp, cq + 1);
      }
    }
    return sqrt_weights_.asDiagonal() * g * sqrt_weights_.asDiagonal();
  }

  /// D Phi^T y for inputs spaced h apart, without forming Phi. The base
  /// angle is advanced by rotation and re-anchored every 64 samples.
  [[nodiscard]] Eigen::VectorXd project(std::span<const double> t, const Eigen::VectorXd& y, double h) const {
    const auto m = sqrt_weights_.size();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
    const double step_c = std::cos(omega_ * h);
    const double step_s = std::sin(omega_ * h);
    double c1 = 1.0;
    double s1 = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (i % 64 == 0) {
        const double angle = omega_ * h * static_cast<double>(i);
        c1 = std::cos(angle);
        s1 = std::sin(angle);
      } else {
        const double cn = c1 * step_c - s1 * step_s;
        s1 = s1 * step_c + c1 * step_s;
        c1 = cn;
      }
      const double yi = y(static_cast<Eigen::Index>(i));
      double c = 1.0;
      double s = 0.0;
      b(0) += yi;
      for (std::size_t k = 1; k <= harmonics_; ++k) {
        const double ck = c * c1 - s * s1;
        s = s * c1 + c * s1;
        c = ck;
        b(static_cast<Eigen::Index>(2 * k - 1)) += yi * c;
        b(static_cast<Eigen::Index>(2 * k)) += yi * s;
      }
    }
    return sqrt_weights_.cwiseProduct(b);
  }

  [[nodiscard]] Eigen::MatrixXd features(std::span<const double> t) const {
    const auto n = static_cast<Eigen::Index>(t.size());
    const auto m = sqrt_weights_.size();
    Eigen::MatrixXd phi(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double angle = omega_ * (t[static_cast<std::size_t>(i)] - origin_);
      const double c1 = std::cos(angle);
      const double s1 = std::sin(angle);
      double c = 1.0;
      double s = 0.0;
      phi(i, 0) = sqrt_weights_(0);
      for (std::size_t k = 1; k <= harmonics_; ++k) {
        const double ck = c * c1 - s * s1;
        s = s * c1 + c * s1;
        c = ck;
        phi(i, static_cast<Eigen::Index>(2 * k - 1)) = sqrt_weights_(static_cast<Eigen::Index>(2 * k - 1)) * c;
        phi(i, static_cast<Eigen::Index>(2 * k)) = sqrt_weights_(static_cast<Eigen::Index>(2 * k)) * s;
      }
    }
    return phi;
  }

  PeriodicWhite kernel_;
  double origin_ = 0.0;
  double omega_ = 1.0;
  double offset_ = 0.0;
  std::size_t harmonics_ = 0;
  std::size_t n_ = 0;
  Eigen::VectorXd sqrt_weights_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd weight_mean_;
  double lml_ = 0.0;
};

}  // namespace grains::gp

#endif  // GRAINS_GP_PERIODIC_GP_HPP
