#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "fedrn/model.hpp"

namespace fedrn {

using ClientId = std::size_t;
using Matrix = std::vector<std::vector<double>>;

/// Standard Gaussian input shared by every client of a simulation.
std::vector<double> make_probe(std::size_t dim, std::uint64_t seed);

/// Min-max normalisation of training accuracies over the scored pool. A pool
/// without spread maps every client to 0.5.
std::vector<double> expertise_scores(std::span<const double> accuracies);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct SimilarityMatrix {
  Matrix raw;         // cosine of the probe outputs, diagonal included
  Matrix normalized;  // off-diagonal min-max, diagonal pinned to 1
};

SimilarityMatrix similarity_matrix(std::span<const Prediction> probe_outputs);

/// R(c, n) = alpha * Exp(n) + (1 - alpha) * Sim(c, n). The diagonal uses
/// Sim(c, c) = 1 regardless of what the matrix holds.
Matrix reliability(std::span<const double> expertise, const Matrix& similarity, double alpha);

struct NeighborScore {
  ClientId id;
  double score;
};

/// The k highest-scoring candidates other than `target`, best first; ties go
/// to the smaller id. Throws ConfigError when fewer than k candidates exist.
std::vector<ClientId> top_k_neighbors(ClientId target, std::span<const NeighborScore> row,
                                      std::size_t k);

/// Snapshot the server builds once per round from the summaries it holds.
struct ReliabilityTable {
  std::vector<ClientId> client_ids;
  std::vector<double> raw_accuracies;
  std::vector<double> expertise;
  SimilarityMatrix similarity;
  Matrix scores;  // R(c, n), indexed by position in client_ids
  double alpha = 0.6;

  static ReliabilityTable build(std::vector<ClientId> ids, std::vector<double> accuracies,
                                std::span<const Prediction> probe_outputs, double alpha);

  /// Position of `id` in client_ids, or client_ids.size() when absent.
  std::size_t index_of(ClientId id) const;
};

/// Square CSV with the client ids as header row.
void write_matrix_csv(std::span<const ClientId> ids, const Matrix& matrix, std::ostream& out);

}  // namespace fedrn
