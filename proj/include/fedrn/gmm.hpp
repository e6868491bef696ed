#pragma once

#include <span>
#include <vector>

namespace fedrn {

struct GaussianComponent {
  double mean = 0.0;
  double variance = 1.0;
  double weight = 0.5;
};

/// Two-component univariate mixture over per-example losses. `clean` is
/// always the component with the smaller mean.
struct Gmm1D2 {
  GaussianComponent clean;
  GaussianComponent noisy;
  /// Set when the input had no spread; both components then sit on the
  /// sample mean and every posterior is exactly 0.5.
  bool degenerate = false;
  int iterations = 0;
};

enum class EmInit {
  /// Means at the 10th and 90th percentiles, both variances equal to the
  /// sample variance, equal weights.
  kPercentile,
};

struct EmConfig {
  int max_iters = 100;
  double rel_tol = 1e-6;
  /// Variance floor as a multiple of (sample variance + 1e-12).
  double var_floor_scale = 1e-6;
  EmInit init = EmInit::kPercentile;

  void validate() const;
};

struct EmFit {
  Gmm1D2 model;
  /// Log-likelihood of the data under the parameters entering each iteration,
  /// followed by the value for the returned parameters.
  std::vector<double> log_likelihood;
};

/// Fits the mixture with EM. Throws ContractViolation for fewer than two
/// values or non-finite input. The fit depends only on the multiset of
/// values, not on their order.
EmFit fit_em_traced(std::span<const double> losses, const EmConfig& cfg = {});
Gmm1D2 fit_em(std::span<const double> losses, const EmConfig& cfg = {});

/// Posterior probability of the clean component at `loss`.
double clean_posterior(const Gmm1D2& gmm, double loss);
double noisy_posterior(const Gmm1D2& gmm, double loss);
std::vector<double> clean_posteriors(const Gmm1D2& gmm, std::span<const double> losses);

double mixture_log_likelihood(const Gmm1D2& gmm, std::span<const double> values);

}  // namespace fedrn
