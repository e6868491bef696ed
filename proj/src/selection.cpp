#include "fedrn/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedrn/errors.hpp"
#include "fedrn/random.hpp"

namespace fedrn {

CleanSet build_clean_set(std::vector<double> probs) {
  CleanSet set;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0))
      throw ContractViolation("build_clean_set: probability outside [0, 1]");
    if (probs[i] > 0.5) set.indices.push_back(i);
  }
  set.clean_prob = std::move(probs);
  return set;
}

CleanSet auxiliary_clean_set(const Gmm1D2& target_gmm, std::span<const double> losses) {
  return build_clean_set(clean_posteriors(target_gmm, losses));
}

std::vector<double> ensemble_clean_prob(const std::vector<std::vector<double>>& posteriors,
                                        std::span<const double> reliabilities) {
  if (posteriors.empty() || posteriors.size() != reliabilities.size())
    throw ContractViolation("ensemble_clean_prob: one reliability per model required");
  double total = 0.0;
  for (double r : reliabilities) {
    if (!(r >= 0.0) || !std::isfinite(r))
      throw ContractViolation("ensemble_clean_prob: reliabilities must be nonnegative");
    total += r;
  }
  if (!(total > 0.0)) throw ContractViolation("ensemble_clean_prob: all reliabilities are zero");

  const std::size_t n = posteriors.front().size();
  std::vector<double> out(n, 0.0);
  for (std::size_t m = 0; m < posteriors.size(); ++m) {
    if (posteriors[m].size() != n)
      throw ContractViolation("ensemble_clean_prob: posterior vectors differ in length");
    const double w = reliabilities[m] / total;
    for (std::size_t i = 0; i < n; ++i) out[i] += w * posteriors[m][i];
  }
  for (double& p : out) p = std::clamp(p, 0.0, 1.0);
  return out;
}

std::vector<std::size_t> small_loss_select(std::span<const double> losses, double keep_fraction) {
  if (losses.empty()) throw ContractViolation("small_loss_select: no losses");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw ConfigError("keep_fraction", "must lie in (0, 1]");
  const auto n = losses.size();
  // The epsilon absorbs products like 0.6 * 5 = 3.0000000000000004.
  auto keep = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(n) - 1e-9));
  keep = std::clamp<std::size_t>(keep, 1, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<LabeledExample> gather(std::span<const LabeledExample> data,
                                   std::span<const std::size_t> indices) {
  std::vector<LabeledExample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(data[i]);
  return out;
}

SelectionOutcome fedrn_select(const ModelParams& target_model,
                              std::span<const ModelParams> neighbor_models,
                              std::span<const LabeledExample> client_data,
                              std::span<const double> reliabilities,
                              const SelectionOptions& options) {
  if (reliabilities.size() != neighbor_models.size() + 1)
    throw ContractViolation("fedrn_select: need one reliability per model, target first");
  for (const auto& m : neighbor_models)
    if (!m.same_architecture(target_model))
      throw ContractViolation("fedrn_select: neighbor architecture differs from target");

  SelectionOutcome outcome;
  const auto target_losses = per_example_losses(target_model, client_data);
  const Gmm1D2 target_gmm = fit_em(target_losses, options.em);
  outcome.degenerate_gmms += target_gmm.degenerate ? 1 : 0;
  outcome.auxiliary = auxiliary_clean_set(target_gmm, target_losses);

  if (neighbor_models.empty()) {
    outcome.clean = outcome.auxiliary;
    return outcome;
  }

  const bool tune = options.fine_tune_neighbors;
  outcome.fine_tune_skipped = tune && outcome.auxiliary.indices.empty();
  const auto aux_examples = tune ? gather(client_data, outcome.auxiliary.indices)
                                 : std::vector<LabeledExample>{};

  std::vector<std::vector<double>> posteriors;
  posteriors.reserve(neighbor_models.size() + 1);
  posteriors.push_back(outcome.auxiliary.clean_prob);
  for (std::size_t j = 0; j < neighbor_models.size(); ++j) {
    ModelParams neighbor = neighbor_models[j];
    if (tune && !aux_examples.empty()) {
      TrainConfig cfg = options.fine_tune;
      cfg.rng_stream = derive_stream(options.fine_tune.rng_stream, Stream::kFineTune, {j});
      neighbor = fine_tune_head(neighbor, aux_examples, cfg).model;
    }
    const auto losses = per_example_losses(neighbor, client_data);
    const Gmm1D2 gmm = fit_em(losses, options.em);
    outcome.degenerate_gmms += gmm.degenerate ? 1 : 0;
    posteriors.push_back(clean_posteriors(gmm, losses));
  }
  outcome.clean = build_clean_set(ensemble_clean_prob(posteriors, reliabilities));
  return outcome;
}

}  // namespace fedrn
