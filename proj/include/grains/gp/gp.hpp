#ifndef GRAINS_GP_GP_HPP
#define GRAINS_GP_GP_HPP

// Exact Gaussian-process regression on dense Gram matrices.
//
//   mean = K(t*, t) [K(t, t) + s_n^2 I]^-1 f
//   cov  = K(t*, t*) - K(t*, t) [K(t, t) + s_n^2 I]^-1 K(t, t*)
//
// The White term of the kernel supplies s_n^2. The Gram matrix is factorized
// once with a Cholesky decomposition; a jitter is added to the diagonal only
// when the plain factorization fails.

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "grains/gp/kernel.hpp"

namespace grains::gp {

class IllConditionedKernel : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MeanPolicy {
  Zero,       ///< targets are modelled as zero-mean
  Empirical,  ///< the training mean is removed before fitting and restored at prediction
};

enum class PredictTarget {
  Observation,  ///< include the White variance in the predictive variance
  Latent,       ///< noise-free latent function
};

struct GpPosterior {
  std::vector<double> mean;
  std::vector<double> std;
};

inline constexpr double kJitterStart = 1e-10;
inline constexpr double kJitterMax = 1e-4;

template <class Loc>
struct GpFit {
  std::vector<Loc> inputs;
  Eigen::VectorXd targets;  // centred
  KernelSpec kernel;
  double offset = 0.0;
  double jitter = 0.0;
  Eigen::MatrixXd factor;   // lower triangular, factor * factor^T = K + s_n^2 I + jitter I
  Eigen::VectorXd alpha;    // (K + s_n^2 I + jitter I)^-1 targets

  [[nodiscard]] std::size_t size() const { return inputs.size(); }
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Cholesky with the escalating jitter schedule. Returns the jitter used.
inline double factorize(Eigen::MatrixXd k, Eigen::MatrixXd& factor) {
  const auto n = k.rows();
  if (n == 0) {
    factor.resize(0, 0);
    return 0.0;
  }
  const double mean_diag = std::max(k.diagonal().mean(), std::numeric_limits<double>::min());
  double jitter = 0.0;
  double scale = kJitterStart;
  for (;;) {
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() == Eigen::Success) {
      factor = llt.matrixL();
      return jitter;
    }
    if (scale > kJitterMax * 1.0000001) {
      throw IllConditionedKernel("gp: Cholesky failed after jitter escalation");
    }
    const double next = scale * mean_diag;
    k.diagonal().array() += next - jitter;
    jitter = next;
    scale *= 10.0;
  }
}

}  // namespace detail

template <class Loc>
GpFit<Loc> gp_fit(std::vector<Loc> inputs, const std::vector<double>& targets, KernelSpec kernel,
                  MeanPolicy mean = MeanPolicy::Empirical) {
  kernel.validate();
  require(inputs.size() == targets.size(), "gp_fit: inputs and targets differ in length");
  for (double y : targets) require(std::isfinite(y), "gp_fit: targets must be finite");

  GpFit<Loc> fit;
  fit.offset = mean == MeanPolicy::Empirical ? detail::mean_of(targets) : 0.0;
  fit.targets = Eigen::Map<const Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(targets.size()))
                    .array() - fit.offset;
  fit.jitter = detail::factorize(gram(kernel, inputs), fit.factor);
  fit.alpha = fit.factor.template triangularView<Eigen::Lower>().solve(fit.targets);
  fit.factor.template triangularView<Eigen::Lower>().transpose().solveInPlace(fit.alpha);
  fit.inputs = std::move(inputs);
  fit.kernel = std::move(kernel);
  return fit;
}

template <class Loc>
GpPosterior gp_predict(const GpFit<Loc>& fit, const std::vector<Loc>& test,
                       PredictTarget target = PredictTarget::Observation) {
  GpPosterior post;
  post.mean.resize(test.size());
  post.std.resize(test.size());
  const bool same = target == PredictTarget::Observation;
  if (fit.size() == 0) {
    for (std::size_t i = 0; i < test.size(); ++i) {
      post.mean[i] = fit.offset;
      post.std[i] = std::sqrt(std::max(0.0, kernel_eval(fit.kernel, test[i], test[i], same)));
    }
    return post;
  }
  const Eigen::MatrixXd ks = cross_gram(fit.kernel, fit.inputs, test);  // n x m
  const Eigen::VectorXd mu = ks.transpose() * fit.alpha;
  const Eigen::MatrixXd v = fit.factor.template triangularView<Eigen::Lower>().solve(ks);
  const Eigen::VectorXd reduction = v.colwise().squaredNorm().transpose();
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    post.mean[i] = fit.offset + mu(e);
    const double var = kernel_eval(fit.kernel, test[i], test[i], same) - reduction(e);
    post.std[i] = std::sqrt(std::max(0.0, var));
  }
  return post;
}

/// log p(f | t) = -1/2 f^T K^-1 f - 1/2 log det K - n/2 log 2 pi, with K the noisy Gram matrix.
template <class Loc>
double log_marginal_likelihood(const GpFit<Loc>& fit) {
  const auto n = static_cast<double>(fit.size());
  const double quad = fit.targets.dot(fit.alpha);
  const double logdet = 2.0 * fit.factor.diagonal().array().log().sum();
  return -0.5 * quad - 0.5 * logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

template <class Loc>
double log_marginal_likelihood(const std::vector<Loc>& inputs, const std::vector<double>& targets,
                               const KernelSpec& kernel, MeanPolicy mean = MeanPolicy::Empirical) {
  return log_marginal_likelihood(gp_fit(inputs, targets, kernel, mean));
}

}  // namespace grains::gp

#endif  // GRAINS_GP_GP_HPP
