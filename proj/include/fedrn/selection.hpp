#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedrn/gmm.hpp"
#include "fedrn/model.hpp"

namespace fedrn {

/// Selected examples of one client. Index i is selected iff clean_prob[i] > 0.5.
struct CleanSet {
  std::vector<std::size_t> indices;
  std::vector<double> clean_prob;
};

/// Strict > 0.5 threshold; index order preserved.
CleanSet build_clean_set(std::vector<double> probs);

/// Clean set judged by the target model's own mixture alone.
CleanSet auxiliary_clean_set(const Gmm1D2& target_gmm, std::span<const double> losses);

/// Reliability-weighted average of per-model clean posteriors. Weights are
/// normalised to sum to one; all-zero reliabilities are a contract violation.
std::vector<double> ensemble_clean_prob(const std::vector<std::vector<double>>& posteriors,
                                        std::span<const double> reliabilities);

/// Indices of the ceil(keep_fraction * n) smallest losses, ascending by index.
/// Equal losses prefer the smaller index.
std::vector<std::size_t> small_loss_select(std::span<const double> losses, double keep_fraction);

struct SelectionOptions {
  TrainConfig fine_tune;  // lr, momentum and stream; epochs taken as given
  EmConfig em;
  bool fine_tune_neighbors = true;
};

struct SelectionOutcome {
  CleanSet clean;
  CleanSet auxiliary;
  bool fine_tune_skipped = false;
  int degenerate_gmms = 0;
};

/// Full neighbor-assisted selection for one client:
///  1. losses of the target model -> mixture -> auxiliary clean set;
///  2. head-only fine-tuning of each neighbor on the auxiliary set;
///  3. per-model losses on the whole local dataset -> mixture -> posteriors;
///  4. reliability-weighted ensemble; 5. threshold at 0.5.
/// `reliabilities` holds R(c, c) first, then R(c, n) for each neighbor. The
/// target model is never fine-tuned and the neighbor inputs are not modified.
SelectionOutcome fedrn_select(const ModelParams& target_model,
                              std::span<const ModelParams> neighbor_models,
                              std::span<const LabeledExample> client_data,
                              std::span<const double> reliabilities,
                              const SelectionOptions& options);

/// Copies the examples at `indices`.
std::vector<LabeledExample> gather(std::span<const LabeledExample> data,
                                   std::span<const std::size_t> indices);

}  // namespace fedrn
