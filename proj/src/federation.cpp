#include "fedrn/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "fedrn/errors.hpp"
#include "fedrn/random.hpp"

namespace fedrn {

const char* to_string(Method m) {
  switch (m) {
    case Method::kFedAvg: return "fedavg";
    case Method::kFedRn: return "fedrn";
    case Method::kSmallLoss: return "small_loss";
    case Method::kOracle: return "oracle";
  }
  return "fedavg";
}

Method method_from_string(const std::string& name) {
  if (name == "fedavg") return Method::kFedAvg;
  if (name == "fedrn") return Method::kFedRn;
  if (name == "small_loss") return Method::kSmallLoss;
  if (name == "oracle") return Method::kOracle;
  throw ConfigError("method", "unknown method '" + name + "'");
}

const char* to_string(NeighborPolicy p) {
  return p == NeighborPolicy::kReliable ? "reliable" : "random";
}

NeighborPolicy neighbor_policy_from_string(const std::string& name) {
  if (name == "reliable") return NeighborPolicy::kReliable;
  if (name == "random") return NeighborPolicy::kRandom;
  throw ConfigError("neighbor_policy", "unknown neighbor policy '" + name + "'");
}

const char* to_string(PartitionKind k) { return k == PartitionKind::kShard ? "shard" : "dirichlet"; }

PartitionKind partition_kind_from_string(const std::string& name) {
  if (name == "shard") return PartitionKind::kShard;
  if (name == "dirichlet") return PartitionKind::kDirichlet;
  throw ConfigError("partition.type", "unknown partition type '" + name + "'");
}

std::size_t SimulationConfig::participants_per_round() const {
  const double m = std::ceil(participation_rate * static_cast<double>(num_clients) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(m, 1.0)), 1, num_clients);
}

int SimulationConfig::resolved_warmup() const {
  if (warmup_rounds >= 0) return warmup_rounds;
  return static_cast<int>(std::llround(0.2 * rounds));
}

void SimulationConfig::validate() const {
  if (num_clients < 1) throw ConfigError("clients", "must be at least 1");
  if (!(participation_rate > 0.0 && participation_rate <= 1.0))
    throw ConfigError("participation_rate", "must lie in (0, 1]");
  if (rounds < 0) throw ConfigError("rounds", "must be nonnegative");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha", "must lie in [0, 1]");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw ConfigError("keep_fraction", "must lie in (0, 1]");
  if (method == Method::kFedRn && participants_per_round() <= k)
    throw ConfigError("k", "need more participants per round (" +
                               std::to_string(participants_per_round()) + ") than neighbors (" +
                               std::to_string(k) + ")");
  if (k >= num_clients && method == Method::kFedRn)
    throw ConfigError("k", "must be smaller than the number of clients");
  train.validate();
  em.validate();
  if (data.num_classes < 2) throw ConfigError("data.num_classes", "must be at least 2");
  if (data.per_class < 1) throw ConfigError("data.per_class", "must be at least 1");
  if (data.dim < 2) throw ConfigError("data.dim", "must be at least 2");
  if (!(data.spread > 0.0)) throw ConfigError("data.spread", "must be positive");
  for (std::size_t w : hidden)
    if (w == 0) throw ConfigError("model.hidden", "widths must be positive");
  if (partition.kind == PartitionKind::kShard && partition.shards_per_client < 1)
    throw ConfigError("partition.shards_per_client", "must be at least 1");
  if (partition.kind == PartitionKind::kDirichlet && !(partition.beta > 0.0))
    throw ConfigError("partition.beta", "must be positive");
  if (!(0.0 <= noise.lo && noise.lo <= noise.hi && noise.hi <= 1.0))
    throw ConfigError("noise.lo", "need 0 <= noise.lo <= noise.hi <= 1");
  if (!noise.asymmetric_map.empty() && noise.asymmetric_map.size() != data.num_classes)
    throw ConfigError("noise.asymmetric_map", "must list one target per class");
}

Scenario build_scenario(const SimulationConfig& cfg) {
  cfg.validate();
  const std::uint64_t seed = cfg.master_seed;
  Scenario s;
  auto blobs = make_blobs(cfg.data.num_classes, cfg.data.per_class, cfg.data.spread, cfg.data.dim,
                          derive_stream(seed, Stream::kData));
  s.test = std::move(blobs.test);
  s.partition = cfg.partition.kind == PartitionKind::kShard
                    ? shard_partition(blobs.train, cfg.num_clients,
                                      cfg.partition.shards_per_client,
                                      derive_stream(seed, Stream::kPartition))
                    : dirichlet_partition(blobs.train, cfg.num_clients, cfg.partition.beta,
                                          derive_stream(seed, Stream::kPartition));
  s.noise_rates = linear_noise_schedule(cfg.num_clients, cfg.noise.lo, cfg.noise.hi);
  NoiseSpec spec = make_noise_spec(cfg.noise.kind, s.noise_rates, cfg.data.num_classes);
  if (!cfg.noise.asymmetric_map.empty()) spec.asymmetric_map = cfg.noise.asymmetric_map;
  if (cfg.noise.kind == NoiseKind::kClean) std::fill(s.noise_rates.begin(), s.noise_rates.end(), 0.0);
  s.train = inject_noise(blobs.train, s.partition, spec, derive_stream(seed, Stream::kNoise));
  for (const auto& indices : s.partition.assignments) {
    std::vector<LabeledExample> local;
    local.reserve(indices.size());
    for (std::size_t i : indices) local.push_back(s.train.examples[i]);
    s.client_data.push_back(std::move(local));
  }
  s.probe = make_probe(cfg.data.dim, derive_stream(seed, Stream::kProbe));
  s.shape = ModelShape{cfg.data.dim, cfg.hidden, cfg.data.num_classes, cfg.activation};
  return s;
}

std::vector<ClientId> sample_participants(const GlobalState& state, const SimulationConfig& cfg) {
  const std::size_t m = cfg.participants_per_round();
  std::vector<ClientId> ids(cfg.num_clients);
  std::iota(ids.begin(), ids.end(), ClientId{0});
  Rng rng = make_rng(derive_stream(cfg.master_seed, Stream::kSampling,
                                   {static_cast<std::uint64_t>(state.round)}));
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, ids.size() - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<NeighborPlan> plan_neighbors(const GlobalState& state,
                                         std::span<const ClientId> participants,
                                         const SimulationConfig& cfg,
                                         ReliabilityTable* table_out) {
  std::vector<ClientId> pool;
  std::vector<double> accuracies;
  std::vector<Prediction> probes;
  for (ClientId id = 0; id < state.clients.size(); ++id) {
    if (!state.clients[id]) continue;
    pool.push_back(id);
    accuracies.push_back(state.clients[id]->accuracy);
    probes.push_back(state.clients[id]->probe_output);
  }

  std::vector<NeighborPlan> plans;
  plans.reserve(participants.size());
  if (pool.empty()) {
    for (ClientId c : participants) plans.push_back({c, {}, {1.0}});
    return plans;
  }

  const ReliabilityTable table = ReliabilityTable::build(pool, accuracies, probes, cfg.alpha);
  for (ClientId c : participants) {
    const std::size_t pos = table.index_of(c);
    const bool seen = pos < pool.size();
    // A client the server has never heard from carries no similarity
    // information; it is scored as 0.5 against everyone.
    const double self = seen ? table.scores[pos][pos] : cfg.alpha * 0.5 + (1.0 - cfg.alpha);
    std::vector<NeighborScore> row;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (pool[j] == c) continue;
      const double score = seen ? table.scores[pos][j]
                                : cfg.alpha * table.expertise[j] + (1.0 - cfg.alpha) * 0.5;
      row.push_back({pool[j], score});
    }

    NeighborPlan plan{c, {}, {self}};
    const std::size_t k = std::min(cfg.k, row.size());
    if (k > 0) {
      if (cfg.neighbor_policy == NeighborPolicy::kReliable) {
        plan.neighbors = top_k_neighbors(c, row, k);
      } else {
        Rng rng = make_rng(derive_stream(cfg.master_seed, Stream::kRandomNeighbors,
                                         {static_cast<std::uint64_t>(state.round), c}));
        std::vector<std::size_t> order(row.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = 0; i < k; ++i) {
          std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
          std::swap(order[i], order[pick(rng)]);
        }
        for (std::size_t i = 0; i < k; ++i) plan.neighbors.push_back(row[order[i]].id);
      }
      for (ClientId n : plan.neighbors) {
        auto it = std::find_if(row.begin(), row.end(), [n](const NeighborScore& s) { return s.id == n; });
        plan.reliabilities.push_back(it->score);
      }
    }
    plans.push_back(std::move(plan));
  }
  if (table_out != nullptr) *table_out = table;
  return plans;
}

ModelParams aggregate(std::span<const ModelParams> models, std::span<const std::size_t> data_sizes) {
  if (models.size() != data_sizes.size() || models.empty())
    throw ContractViolation("aggregate: one data size per model required");
  double total = 0.0;
  for (std::size_t n : data_sizes) {
    if (n == 0) throw ContractViolation("aggregate: data sizes must be positive");
    total += static_cast<double>(n);
  }
  std::vector<double> weights;
  weights.reserve(data_sizes.size());
  for (std::size_t n : data_sizes) weights.push_back(static_cast<double>(n) / total);
  return average_params(models, weights);
}

namespace {

void finish(LocalResult& r, std::span<const LabeledExample> data, std::span<const double> probe) {
  r.accuracy = training_accuracy(r.model, data);
  r.probe_output = forward(r.model, probe);
}

LocalResult train_subset(std::span<const LabeledExample> data, const ModelParams& global,
                         std::vector<std::size_t> subset, const TrainConfig& cfg,
                         std::span<const double> probe) {
  LocalResult r;
  if (subset.empty()) {
    r.model = global;
    r.empty_clean_set = true;
  } else if (subset.size() == data.size()) {
    r.model = sgd_train(global, data, cfg);
  } else {
    const auto examples = gather(data, subset);
    r.model = sgd_train(global, examples, cfg);
  }
  r.trained_on = std::move(subset);
  finish(r, data, probe);
  return r;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

LocalResult local_update_fedavg(std::span<const LabeledExample> data, const ModelParams& global,
                                const TrainConfig& cfg, std::span<const double> probe) {
  if (data.empty()) throw ContractViolation("local_update_fedavg: client has no data");
  return train_subset(data, global, all_indices(data.size()), cfg, probe);
}

LocalResult local_update_fedrn(std::span<const LabeledExample> data, const ModelParams& global,
                               std::span<const ModelParams> neighbor_models,
                               std::span<const double> reliabilities, const TrainConfig& cfg,
                               const SelectionOptions& selection, std::span<const double> probe) {
  if (data.empty()) throw ContractViolation("local_update_fedrn: client has no data");
  SelectionOptions options = selection;
  options.fine_tune.learning_rate = cfg.learning_rate;
  options.fine_tune.momentum = cfg.momentum;
  options.fine_tune.batch_size = cfg.batch_size;
  options.fine_tune.local_epochs = 1;
  options.fine_tune.rng_stream = derive_stream(cfg.rng_stream, Stream::kFineTune);

  SelectionOutcome outcome = fedrn_select(global, neighbor_models, data, reliabilities, options);
  LocalResult r = train_subset(data, global, outcome.clean.indices, cfg, probe);
  r.selection = std::move(outcome.clean);
  r.fine_tune_skipped = outcome.fine_tune_skipped;
  r.degenerate_gmms = outcome.degenerate_gmms;
  return r;
}

LocalResult local_update_small_loss(std::span<const LabeledExample> data,
                                    const ModelParams& global, double keep_fraction,
                                    const TrainConfig& cfg, std::span<const double> probe) {
  if (data.empty()) throw ContractViolation("local_update_small_loss: client has no data");
  const auto losses = per_example_losses(global, data);
  auto keep = small_loss_select(losses, keep_fraction);
  CleanSet selected;
  selected.indices = keep;
  selected.clean_prob.assign(data.size(), 0.0);
  for (std::size_t i : keep) selected.clean_prob[i] = 1.0;
  LocalResult r = train_subset(data, global, std::move(keep), cfg, probe);
  r.selection = std::move(selected);
  return r;
}

LocalResult local_update_oracle(std::span<const LabeledExample> data, const ModelParams& global,
                                const TrainConfig& cfg, std::span<const double> probe) {
  if (data.empty()) throw ContractViolation("local_update_oracle: client has no data");
  std::vector<std::size_t> clean;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].is_clean()) clean.push_back(i);
  return train_subset(data, global, std::move(clean), cfg, probe);
}

namespace {

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  const unsigned count = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::optional<double> mean_of_defined(const std::vector<std::optional<double>>& values) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& v : values)
    if (v) {
      total += *v;
      ++count;
    }
  if (count == 0) return std::nullopt;
  return total / static_cast<double>(count);
}

}  // namespace

SimulationResult run_simulation(const SimulationConfig& cfg, const RunOptions& options) {
  return run_simulation(cfg, build_scenario(cfg), options);
}

SimulationResult run_simulation(const SimulationConfig& cfg, const Scenario& scenario,
                                const RunOptions& options) {
  cfg.validate();
  const int warmup = cfg.resolved_warmup();

  GlobalState state;
  state.global_params = init_model(scenario.shape, derive_stream(cfg.master_seed, Stream::kInit));
  state.clients.resize(cfg.num_clients);

  SimulationResult result;
  result.initial_model = state.global_params;
  result.noise_rates = scenario.noise_rates;

  auto snapshot_accuracies = [&] {
    result.accuracy_after_warmup.clear();
    for (const auto& c : state.clients)
      result.accuracy_after_warmup.push_back(c ? std::optional<double>(c->accuracy) : std::nullopt);
  };

  for (int t = 0; t < cfg.rounds; ++t) {
    if (t == warmup) snapshot_accuracies();
    state.round = t;
    const bool robust = t >= warmup;
    const Method method = robust || cfg.method == Method::kOracle ? cfg.method : Method::kFedAvg;

    // Server: participant sampling and neighbor retrieval.
    std::vector<ClientId> participants;
    std::vector<NeighborPlan> plans;
    std::vector<std::vector<ModelParams>> neighbor_models;
    {
      audit::DataAccessScope server_scope;
      participants = sample_participants(state, cfg);
      if (method == Method::kFedRn) {
        ReliabilityTable table;
        plans = plan_neighbors(state, participants, cfg, &table);
        if (!table.client_ids.empty()) result.last_table = std::move(table);
        for (const auto& plan : plans) {
          std::vector<ModelParams> models;
          for (ClientId n : plan.neighbors) models.push_back(state.clients[n]->model);
          neighbor_models.push_back(std::move(models));
        }
      }
      result.server_data_touches += server_scope.count();
    }

    // Clients: local updates, independent streams per (round, client).
    std::vector<LocalResult> local(participants.size());
    SelectionOptions selection;
    selection.em = cfg.em;
    selection.fine_tune_neighbors = cfg.fine_tune;
    parallel_for(participants.size(), options.threads, [&](std::size_t i) {
      const ClientId c = participants[i];
      const auto& data = scenario.client_data[c];
      TrainConfig train = cfg.train;
      train.rng_stream = derive_stream(cfg.master_seed, Stream::kLocalTrain,
                                       {static_cast<std::uint64_t>(t), c});
      switch (method) {
        case Method::kFedAvg:
          local[i] = local_update_fedavg(data, state.global_params, train, scenario.probe);
          break;
        case Method::kOracle:
          local[i] = local_update_oracle(data, state.global_params, train, scenario.probe);
          break;
        case Method::kSmallLoss:
          local[i] = local_update_small_loss(data, state.global_params, cfg.keep_fraction, train,
                                             scenario.probe);
          break;
        case Method::kFedRn:
          local[i] = local_update_fedrn(data, state.global_params, neighbor_models[i],
                                        plans[i].reliabilities, train, selection, scenario.probe);
          break;
      }
    });

    // Server: aggregation and summary bookkeeping.
    {
      audit::DataAccessScope server_scope;
      std::vector<ModelParams> models;
      std::vector<std::size_t> sizes;
      for (std::size_t i = 0; i < participants.size(); ++i) {
        // Oracle clients own only their correctly labelled examples.
        const std::size_t size = method == Method::kOracle
                                     ? local[i].trained_on.size()
                                     : scenario.partition.assignments[participants[i]].size();
        if (size == 0) continue;
        models.push_back(local[i].model);
        sizes.push_back(size);
      }
      if (!models.empty()) state.global_params = aggregate(models, sizes);
      for (std::size_t i = 0; i < participants.size(); ++i)
        state.clients[participants[i]] =
            ClientSummary{local[i].model, local[i].accuracy, local[i].probe_output};
      result.server_data_touches += server_scope.count();
    }

    RoundMetrics m;
    m.round = t;
    m.test_accuracy = test_accuracy(state.global_params, scenario.test.examples);
    m.participants = participants;
    std::vector<std::optional<double>> precisions, recalls;
    for (std::size_t i = 0; i < participants.size(); ++i) {
      const auto& data = scenario.client_data[participants[i]];
      m.per_client_accuracy.push_back(test_accuracy(local[i].model, scenario.test.examples));
      m.training_accuracy.push_back(local[i].accuracy);
      m.train_set_size.push_back(local[i].trained_on.size());
      m.empty_clean_sets += local[i].empty_clean_set ? 1 : 0;
      m.fine_tune_skips += local[i].fine_tune_skipped ? 1 : 0;
      m.degenerate_gmms += local[i].degenerate_gmms;
      if (local[i].selection) {
        precisions.push_back(label_precision(local[i].selection->indices, data));
        recalls.push_back(label_recall(local[i].selection->indices, data));
      }
    }
    m.label_precision = mean_of_defined(precisions);
    m.label_recall = mean_of_defined(recalls);
    result.rounds.push_back(std::move(m));
  }
  if (warmup >= cfg.rounds) snapshot_accuracies();
  result.final_model = state.global_params;
  return result;
}

}  // namespace fedrn
