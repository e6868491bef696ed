#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedrn/example.hpp"

namespace fedrn {

struct Dataset {
  std::vector<LabeledExample> examples;
  std::size_t num_classes = 0;
  std::size_t dim = 0;

  std::size_t size() const { return examples.size(); }
};

struct BlobSplit {
  Dataset train;
  Dataset test;
};

/// Isotropic Gaussian clusters, one per class. Class means are unit vectors
/// in random directions and `spread` is the per-coordinate standard
/// deviation, so a small spread gives well separated classes. Ten percent of
/// each class (rounded) is held out as the test split.
BlobSplit make_blobs(std::size_t num_classes, std::size_t per_class, double spread,
                     std::size_t dim, std::uint64_t seed);

/// Per-client lists of indices into a shared dataset, each sorted ascending.
struct ClientPartition {
  std::vector<std::vector<std::size_t>> assignments;

  std::size_t num_clients() const { return assignments.size(); }
  std::size_t total_size() const;
  /// Disjoint, nonempty, in range. Throws ContractViolation otherwise.
  void validate(std::size_t dataset_size) const;
};

/// Sorts by true label, cuts num_clients * shards_per_client equal shards
/// (trailing remainder dropped) and deals shards_per_client random shards to
/// each client.
ClientPartition shard_partition(const Dataset& dataset, std::size_t num_clients,
                                std::size_t shards_per_client, std::uint64_t seed);

/// Per class, splits the examples across clients by proportions drawn from
/// a symmetric Dirichlet(beta). Clients left empty receive one example from
/// the currently largest client until none are empty.
ClientPartition dirichlet_partition(const Dataset& dataset, std::size_t num_clients, double beta,
                                    std::uint64_t seed);

/// rate_i = lo + (hi - lo) * i / (n - 1); a single client gets the midpoint.
std::vector<double> linear_noise_schedule(std::size_t num_clients, double lo, double hi);

enum class NoiseType { kClean, kSymmetric, kAsymmetric };

struct ClientNoise {
  NoiseType type = NoiseType::kClean;
  double rate = 0.0;
};

struct NoiseSpec {
  std::vector<ClientNoise> clients;
  /// Target class for asymmetric flips, indexed by true class.
  std::vector<int> asymmetric_map;

  static std::vector<int> cyclic_map(std::size_t num_classes);
};

enum class NoiseKind { kClean, kSymmetric, kAsymmetric, kMixed };

const char* to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& name);

/// Builds a per-client spec from a rate schedule. Mixed noise assigns
/// symmetric noise to the first half of the clients and asymmetric noise to
/// the rest.
NoiseSpec make_noise_spec(NoiseKind kind, const std::vector<double>& rates,
                          std::size_t num_classes);

/// Corrupts round(rate * |D_c|) observed labels per client, chosen without
/// replacement. Symmetric flips pick uniformly among the other classes;
/// asymmetric flips follow the map. True labels and features are untouched.
Dataset inject_noise(const Dataset& dataset, const ClientPartition& partition,
                     const NoiseSpec& spec, std::uint64_t seed);

/// One example per line: features, true label, observed label, comma
/// separated, floats in shortest round-trip form.
void write_dataset(const Dataset& dataset, std::ostream& out);
Dataset read_dataset(std::istream& in, std::size_t num_classes = 0);

}  // namespace fedrn
