#include "fedrn/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "fedrn/errors.hpp"
#include "fedrn/random.hpp"
#include "fedrn/text.hpp"

namespace fedrn {

std::vector<double> make_probe(std::size_t dim, std::uint64_t seed) {
  Rng rng = make_rng(derive_stream(seed, Stream::kProbe));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> probe(dim);
  for (double& v : probe) v = normal(rng);
  return probe;
}

namespace {

std::vector<double> min_max(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.5);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
  return out;
}

}  // namespace

std::vector<double> expertise_scores(std::span<const double> accuracies) {
  return min_max(accuracies);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractViolation("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw ContractViolation("cosine_similarity: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

SimilarityMatrix similarity_matrix(std::span<const Prediction> probe_outputs) {
  const std::size_t n = probe_outputs.size();
  SimilarityMatrix sim;
  sim.raw.assign(n, std::vector<double>(n, 1.0));
  sim.normalized.assign(n, std::vector<double>(n, 1.0));
  std::vector<double> off_diagonal;
  for (std::size_t i = 0; i < n; ++i) {
    if (probe_outputs[i].probs.size() != probe_outputs[0].probs.size())
      throw ContractViolation("similarity_matrix: probe outputs differ in length");
    sim.raw[i][i] = cosine_similarity(probe_outputs[i].probs, probe_outputs[i].probs);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double c = cosine_similarity(probe_outputs[i].probs, probe_outputs[j].probs);
      sim.raw[i][j] = sim.raw[j][i] = c;
      off_diagonal.push_back(c);
    }
  }
  const auto scaled = min_max(off_diagonal);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j, ++k) sim.normalized[i][j] = sim.normalized[j][i] = scaled[k];
  return sim;
}

Matrix reliability(std::span<const double> expertise, const Matrix& similarity, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha", "must lie in [0, 1]");
  const std::size_t n = expertise.size();
  if (similarity.size() != n) throw ContractViolation("reliability: size mismatch");
  Matrix r(n, std::vector<double>(n));
  for (std::size_t c = 0; c < n; ++c) {
    if (similarity[c].size() != n) throw ContractViolation("reliability: similarity not square");
    for (std::size_t m = 0; m < n; ++m) {
      const double sim = c == m ? 1.0 : similarity[c][m];
      r[c][m] = alpha * expertise[m] + (1.0 - alpha) * sim;
    }
  }
  return r;
}

std::vector<ClientId> top_k_neighbors(ClientId target, std::span<const NeighborScore> row,
                                      std::size_t k) {
  if (k == 0) throw ConfigError("k", "must be at least 1 to retrieve neighbors");
  std::vector<NeighborScore> candidates;
  candidates.reserve(row.size());
  for (const auto& s : row)
    if (s.id != target) candidates.push_back(s);
  if (k > candidates.size())
    throw ConfigError("k", "asked for " + std::to_string(k) + " neighbors but only " +
                               std::to_string(candidates.size()) + " are available");
  auto better = [](const NeighborScore& a, const NeighborScore& b) {
    return a.score > b.score || (a.score == b.score && a.id < b.id);
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), better);
  std::vector<ClientId> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(candidates[i].id);
  return out;
}

ReliabilityTable ReliabilityTable::build(std::vector<ClientId> ids, std::vector<double> accuracies,
                                         std::span<const Prediction> probe_outputs, double alpha) {
  if (ids.size() != accuracies.size() || ids.size() != probe_outputs.size())
    throw ContractViolation("ReliabilityTable: inputs disagree in length");
  ReliabilityTable table;
  table.client_ids = std::move(ids);
  table.raw_accuracies = std::move(accuracies);
  table.alpha = alpha;
  table.expertise = expertise_scores(table.raw_accuracies);
  table.similarity = similarity_matrix(probe_outputs);
  table.scores = reliability(table.expertise, table.similarity.normalized, alpha);
  return table;
}

std::size_t ReliabilityTable::index_of(ClientId id) const {
  return static_cast<std::size_t>(std::find(client_ids.begin(), client_ids.end(), id) -
                                  client_ids.begin());
}

void write_matrix_csv(std::span<const ClientId> ids, const Matrix& matrix, std::ostream& out) {
  if (matrix.size() != ids.size()) throw ContractViolation("write_matrix_csv: size mismatch");
  for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? "," : "") << ids[i];
  out << '\n';
  for (const auto& row : matrix) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << format_double(row[j]);
    out << '\n';
  }
}

}  // namespace fedrn
