#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "fedrn/example.hpp"
#include "fedrn/model.hpp"

namespace fedrn {

/// Share of selected examples whose observed label is correct. Absent for an
/// empty selection.
std::optional<double> label_precision(std::span<const std::size_t> selected,
                                      std::span<const LabeledExample> client_data);

/// Share of the client's correctly labelled examples that were selected.
/// Absent when the client has no correctly labelled example.
std::optional<double> label_recall(std::span<const std::size_t> selected,
                                   std::span<const LabeledExample> client_data);

/// Argmax accuracy against true labels.
double test_accuracy(const ModelParams& model, std::span<const LabeledExample> test_set);

struct Spread {
  double min = 0.0;
  double max = 0.0;
  double stddev = 0.0;  // population
};

Spread accuracy_spread(std::span<const double> per_client_accuracy);

double mean(std::span<const double> values);
double population_stddev(std::span<const double> values);

struct RoundMetrics {
  int round = 0;
  double test_accuracy = 0.0;
  std::vector<std::size_t> participants;
  // Aligned with participants.
  std::vector<double> per_client_accuracy;  // local model on the global test split
  std::vector<double> training_accuracy;    // local model on its own observed labels
  std::vector<std::size_t> train_set_size;  // examples each local update trained on
  std::optional<double> label_precision;    // mean over participants where defined
  std::optional<double> label_recall;
  int empty_clean_sets = 0;
  int degenerate_gmms = 0;
  int fine_tune_skips = 0;
};

/// Fixed column order shared by the CSV and JSON exports.
inline constexpr const char* kMetricsColumns[] = {
    "round",      "test_accuracy", "lp_mean", "lr_mean",
    "acc_min",    "acc_max",       "acc_std", "clean_set_mean_size",
    "empty_clean_flags", "degenerate_gmm_count"};

void write_metrics_csv(std::span<const RoundMetrics> rounds, std::ostream& out);
/// JSON array of objects keyed by the CSV column names; absent values are null.
void write_metrics_json(std::span<const RoundMetrics> rounds, std::ostream& out);

}  // namespace fedrn
