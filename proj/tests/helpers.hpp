#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fedrn/example.hpp"
#include "fedrn/model.hpp"

namespace fedrn::testing {

inline DenseLayer make_layer(std::size_t in, std::size_t out, std::vector<double> weights,
                             std::vector<double> bias, Activation act = Activation::kIdentity) {
  return DenseLayer{in, out, std::move(weights), std::move(bias), act};
}

// Linear softmax classifier with no feature layers.
inline ModelParams linear_model(std::size_t in, std::size_t classes, std::vector<double> weights,
                                std::vector<double> bias) {
  ModelParams m;
  m.num_classes = classes;
  m.head = make_layer(in, classes, std::move(weights), std::move(bias));
  return m;
}

inline std::vector<LabeledExample> random_examples(std::size_t n, std::size_t dim,
                                                   std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<std::size_t> label(0, classes - 1);
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(dim);
    for (auto& v : x) v = g(rng);
    const auto y = label(rng);
    out.emplace_back(std::move(x), y, label(rng));
  }
  return out;
}

// Every scalar drawn from N(0, scale), biases included, so ReLU units sit
// away from their kink with probability one.
inline ModelParams random_model(const ModelShape& shape, std::uint64_t seed, double scale = 0.7) {
  auto m = zero_model(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  auto flat = m.flatten();
  for (auto& v : flat) v = g(rng);
  m.assign_flat(flat);
  return m;
}

// Central differences of mean_loss over every scalar.
inline std::vector<double> numeric_gradient(const ModelParams& model,
                                            const std::vector<LabeledExample>& data,
                                            double h = 1e-6) {
  auto flat = model.flatten();
  std::vector<double> grad(flat.size());
  ModelParams probe = model;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double keep = flat[i];
    flat[i] = keep + h;
    probe.assign_flat(flat);
    const double up = mean_loss(probe, data);
    flat[i] = keep - h;
    probe.assign_flat(flat);
    const double down = mean_loss(probe, data);
    flat[i] = keep;
    grad[i] = (up - down) / (2 * h);
  }
  return grad;
}

inline double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale < 1e-8) return 0.0;
  return std::abs(a - b) / scale;
}

}  // namespace fedrn::testing
