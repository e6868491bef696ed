#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedrn/data.hpp"
#include "fedrn/gmm.hpp"
#include "fedrn/metrics.hpp"
#include "fedrn/model.hpp"
#include "fedrn/reliability.hpp"
#include "fedrn/selection.hpp"

namespace fedrn {

enum class Method { kFedAvg, kFedRn, kSmallLoss, kOracle };
enum class NeighborPolicy { kReliable, kRandom };
enum class PartitionKind { kShard, kDirichlet };

const char* to_string(Method m);
Method method_from_string(const std::string& name);
const char* to_string(NeighborPolicy p);
NeighborPolicy neighbor_policy_from_string(const std::string& name);
const char* to_string(PartitionKind k);
PartitionKind partition_kind_from_string(const std::string& name);

struct DataConfig {
  std::size_t num_classes = 10;
  std::size_t per_class = 500;
  double spread = 0.35;
  std::size_t dim = 16;
};

struct PartitionConfig {
  PartitionKind kind = PartitionKind::kShard;
  std::size_t shards_per_client = 2;
  double beta = 0.5;
};

struct NoiseConfig {
  NoiseKind kind = NoiseKind::kSymmetric;
  double lo = 0.0;
  double hi = 0.8;
  /// Empty means the cyclic map c -> (c + 1) mod C.
  std::vector<int> asymmetric_map;
};

struct SimulationConfig {
  std::size_t num_clients = 100;
  double participation_rate = 0.1;
  int rounds = 100;
  /// Negative means 20% of rounds.
  int warmup_rounds = -1;
  std::size_t k = 2;
  double alpha = 0.6;
  Method method = Method::kFedRn;
  NeighborPolicy neighbor_policy = NeighborPolicy::kReliable;
  bool fine_tune = true;
  double keep_fraction = 0.6;
  TrainConfig train;
  std::vector<std::size_t> hidden = {32, 32};
  Activation activation = Activation::kRelu;
  DataConfig data;
  PartitionConfig partition;
  NoiseConfig noise;
  EmConfig em;
  std::uint64_t master_seed = 1;

  std::size_t participants_per_round() const;
  int resolved_warmup() const;
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Everything derived from the master seed before training starts.
struct Scenario {
  Dataset train;  // observed labels already corrupted
  Dataset test;
  ClientPartition partition;
  std::vector<std::vector<LabeledExample>> client_data;
  std::vector<double> noise_rates;
  std::vector<double> probe;
  ModelShape shape;
};

Scenario build_scenario(const SimulationConfig& cfg);

/// What the server keeps about a client after it has participated.
struct ClientSummary {
  ModelParams model;
  double accuracy = 0.0;
  Prediction probe_output;
};

struct GlobalState {
  ModelParams global_params;
  int round = 0;
  std::vector<std::optional<ClientSummary>> clients;
};

// ---- server side: models, accuracies, probe outputs and sizes only ----

/// Uniform sample of ceil(rate * num_clients) clients keyed on
/// (master_seed, round), returned in ascending order.
std::vector<ClientId> sample_participants(const GlobalState& state, const SimulationConfig& cfg);

struct NeighborPlan {
  ClientId client = 0;
  std::vector<ClientId> neighbors;
  /// R(c, c) followed by R(c, n) for each neighbor.
  std::vector<double> reliabilities;
};

/// Builds the round's reliability table over every client the server has a
/// summary for and retrieves neighbors for each participant.
std::vector<NeighborPlan> plan_neighbors(const GlobalState& state,
                                         std::span<const ClientId> participants,
                                         const SimulationConfig& cfg,
                                         ReliabilityTable* table_out = nullptr);

/// Data-size weighted average.
ModelParams aggregate(std::span<const ModelParams> models, std::span<const std::size_t> data_sizes);

// ---- client side ----

struct LocalResult {
  ModelParams model;
  double accuracy = 0.0;
  Prediction probe_output;
  /// Indices into the client's data that the update trained on.
  std::vector<std::size_t> trained_on;
  /// Set for selection-based updates.
  std::optional<CleanSet> selection;
  bool empty_clean_set = false;
  bool fine_tune_skipped = false;
  int degenerate_gmms = 0;
};

LocalResult local_update_fedavg(std::span<const LabeledExample> data, const ModelParams& global,
                                const TrainConfig& cfg, std::span<const double> probe);

LocalResult local_update_fedrn(std::span<const LabeledExample> data, const ModelParams& global,
                               std::span<const ModelParams> neighbor_models,
                               std::span<const double> reliabilities, const TrainConfig& cfg,
                               const SelectionOptions& selection, std::span<const double> probe);

LocalResult local_update_small_loss(std::span<const LabeledExample> data,
                                    const ModelParams& global, double keep_fraction,
                                    const TrainConfig& cfg, std::span<const double> probe);

/// FedAvg restricted to the examples whose observed label is correct.
LocalResult local_update_oracle(std::span<const LabeledExample> data, const ModelParams& global,
                                const TrainConfig& cfg, std::span<const double> probe);

// ---- coordinator ----

struct RunOptions {
  /// Worker threads for the local updates of a round; 1 runs sequentially.
  unsigned threads = 1;
};

struct SimulationResult {
  std::vector<RoundMetrics> rounds;
  ModelParams initial_model;
  ModelParams final_model;
  std::vector<double> noise_rates;
  /// Server-held training accuracy per client once warm-up has finished.
  std::vector<std::optional<double>> accuracy_after_warmup;
  std::optional<ReliabilityTable> last_table;
  /// Reads of example contents observed inside server-side phases.
  std::uint64_t server_data_touches = 0;
};

SimulationResult run_simulation(const SimulationConfig& cfg, const RunOptions& options = {});
SimulationResult run_simulation(const SimulationConfig& cfg, const Scenario& scenario,
                                const RunOptions& options = {});

}  // namespace fedrn
