#include "fedrn/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <utility>

#include "fedrn/errors.hpp"

namespace fedrn {

namespace {

constexpr double kDegenerateSpan = 1e-9;

double log_weighted_density(const GaussianComponent& g, double x) {
  if (g.weight <= 0.0) return -std::numeric_limits<double>::infinity();
  const double d = x - g.mean;
  return std::log(g.weight) - 0.5 * std::log(2.0 * std::numbers::pi * g.variance) -
         0.5 * d * d / g.variance;
}

// Linear-interpolated percentile of sorted data, q in [0, 1].
double percentile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

void order_components(Gmm1D2& gmm) {
  if (gmm.noisy.mean < gmm.clean.mean) std::swap(gmm.clean, gmm.noisy);
}

}  // namespace

void EmConfig::validate() const {
  if (max_iters < 1) throw ConfigError("em.max_iters", "must be at least 1");
  if (!(rel_tol > 0.0)) throw ConfigError("em.rel_tol", "must be positive");
  if (!(var_floor_scale > 0.0)) throw ConfigError("em.var_floor_scale", "must be positive");
}

double mixture_log_likelihood(const Gmm1D2& gmm, std::span<const double> values) {
  double total = 0.0;
  for (double x : values) {
    const double a = log_weighted_density(gmm.clean, x);
    const double b = log_weighted_density(gmm.noisy, x);
    const double m = std::max(a, b);
    total += m + std::log(std::exp(a - m) + std::exp(b - m));
  }
  return total;
}

EmFit fit_em_traced(std::span<const double> losses, const EmConfig& cfg) {
  cfg.validate();
  if (losses.size() < 2) throw ContractViolation("fit_em: need at least 2 values");
  std::vector<double> x(losses.begin(), losses.end());
  for (double v : x)
    if (!std::isfinite(v)) throw ContractViolation("fit_em: non-finite value");
  // Sorting makes every sum below independent of the caller's ordering.
  std::sort(x.begin(), x.end());

  const auto n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double floor = cfg.var_floor_scale * (var + 1e-12);

  EmFit fit;
  Gmm1D2& gmm = fit.model;
  if (x.back() - x.front() <= kDegenerateSpan) {
    gmm.clean = gmm.noisy = {mean, std::max(var, floor), 0.5};
    gmm.degenerate = true;
    fit.log_likelihood.push_back(mixture_log_likelihood(gmm, x));
    return fit;
  }

  // EM runs on standardised values so the stopping rule, and with it the
  // fit, is unchanged by shifting or rescaling the losses.
  const double sd = std::sqrt(var);
  const double log_sd_total = n * std::log(sd);
  std::vector<double> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - mean) / sd;
  const double z_floor = floor / var;

  Gmm1D2 zg;
  zg.clean = {percentile(z, 0.1), std::max(1.0, z_floor), 0.5};
  zg.noisy = {percentile(z, 0.9), std::max(1.0, z_floor), 0.5};

  std::vector<double> resp(z.size());  // responsibility of the first component
  double ll = mixture_log_likelihood(zg, z);
  fit.log_likelihood.push_back(ll - log_sd_total);
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    // E-step.
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double a = log_weighted_density(zg.clean, z[i]);
      const double b = log_weighted_density(zg.noisy, z[i]);
      const double m = std::max(a, b);
      const double ea = std::exp(a - m);
      resp[i] = ea / (ea + std::exp(b - m));
    }
    // M-step.
    double n1 = 0.0, s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      n1 += resp[i];
      s1 += resp[i] * z[i];
      s2 += (1.0 - resp[i]) * z[i];
    }
    const double n2 = n - n1;
    auto update = [&](GaussianComponent& g, double nk, double sum, bool first) {
      g.weight = nk / n;
      if (nk <= 0.0) return;  // empty component keeps its shape, weight 0
      g.mean = sum / nk;
      double sq = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double r = first ? resp[i] : 1.0 - resp[i];
        sq += r * (z[i] - g.mean) * (z[i] - g.mean);
      }
      g.variance = std::max(sq / nk, z_floor);
    };
    update(zg.clean, n1, s1, true);
    update(zg.noisy, n2, s2, false);
    zg.iterations = iter + 1;

    const double next = mixture_log_likelihood(zg, z);
    fit.log_likelihood.push_back(next - log_sd_total);
    const bool converged = next - ll < cfg.rel_tol * std::abs(ll);
    ll = next;
    if (converged) break;
  }

  auto unscale = [&](const GaussianComponent& c) {
    return GaussianComponent{mean + sd * c.mean, std::max(var * c.variance, floor), c.weight};
  };
  gmm.clean = unscale(zg.clean);
  gmm.noisy = unscale(zg.noisy);
  gmm.iterations = zg.iterations;
  order_components(gmm);
  return fit;
}

Gmm1D2 fit_em(std::span<const double> losses, const EmConfig& cfg) {
  return fit_em_traced(losses, cfg).model;
}

double clean_posterior(const Gmm1D2& gmm, double loss) {
  const double a = log_weighted_density(gmm.clean, loss);
  const double b = log_weighted_density(gmm.noisy, loss);
  if (a == b) return 0.5;
  const double m = std::max(a, b);
  const double ea = std::exp(a - m);
  return ea / (ea + std::exp(b - m));
}

double noisy_posterior(const Gmm1D2& gmm, double loss) {
  const double a = log_weighted_density(gmm.clean, loss);
  const double b = log_weighted_density(gmm.noisy, loss);
  if (a == b) return 0.5;
  const double m = std::max(a, b);
  const double eb = std::exp(b - m);
  return eb / (std::exp(a - m) + eb);
}

std::vector<double> clean_posteriors(const Gmm1D2& gmm, std::span<const double> losses) {
  std::vector<double> out;
  out.reserve(losses.size());
  for (double l : losses) out.push_back(clean_posterior(gmm, l));
  return out;
}

}  // namespace fedrn
