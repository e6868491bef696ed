#include "fedrn/data.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "fedrn/errors.hpp"
#include "fedrn/random.hpp"
#include "fedrn/text.hpp"

namespace fedrn {

BlobSplit make_blobs(std::size_t num_classes, std::size_t per_class, double spread,
                     std::size_t dim, std::uint64_t seed) {
  if (num_classes < 2) throw ContractViolation("make_blobs: need at least 2 classes");
  if (per_class < 1) throw ContractViolation("make_blobs: need at least 1 example per class");
  if (dim < 2) throw ContractViolation("make_blobs: need dim >= 2");
  if (!(spread > 0.0) || !std::isfinite(spread))
    throw ContractViolation("make_blobs: spread must be positive");

  Rng rng = make_rng(derive_stream(seed, Stream::kData));
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::vector<double>> means(num_classes, std::vector<double>(dim));
  for (auto& mean : means) {
    double norm = 0.0;
    do {
      for (double& v : mean) v = normal(rng);
      norm = std::sqrt(std::inner_product(mean.begin(), mean.end(), mean.begin(), 0.0));
    } while (norm < 1e-12);
    for (double& v : mean) v /= norm;
  }

  const auto test_per_class =
      static_cast<std::size_t>(std::llround(static_cast<double>(per_class) / 10.0));
  BlobSplit split;
  split.train.num_classes = split.test.num_classes = num_classes;
  split.train.dim = split.test.dim = dim;
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      std::vector<double> x(dim);
      for (std::size_t d = 0; d < dim; ++d) x[d] = means[c][d] + spread * normal(rng);
      const int label = static_cast<int>(c);
      auto& target = i < per_class - test_per_class ? split.train : split.test;
      target.examples.emplace_back(std::move(x), label, label);
    }
  }
  std::shuffle(split.train.examples.begin(), split.train.examples.end(), rng);
  std::shuffle(split.test.examples.begin(), split.test.examples.end(), rng);
  return split;
}

std::size_t ClientPartition::total_size() const {
  std::size_t n = 0;
  for (const auto& a : assignments) n += a.size();
  return n;
}

void ClientPartition::validate(std::size_t dataset_size) const {
  std::vector<char> seen(dataset_size, 0);
  for (const auto& client : assignments) {
    if (client.empty()) throw ContractViolation("partition: empty client");
    for (std::size_t idx : client) {
      if (idx >= dataset_size) throw ContractViolation("partition: index out of range");
      if (seen[idx]) throw ContractViolation("partition: index assigned twice");
      seen[idx] = 1;
    }
  }
}

ClientPartition shard_partition(const Dataset& dataset, std::size_t num_clients,
                                std::size_t shards_per_client, std::uint64_t seed) {
  if (num_clients == 0 || shards_per_client == 0)
    throw ConfigError("partition.shards_per_client", "clients and shards must be positive");
  const std::size_t num_shards = num_clients * shards_per_client;
  const std::size_t shard_size = dataset.size() / num_shards;
  if (shard_size == 0)
    throw ConfigError("partition.shards_per_client",
                      "dataset of " + std::to_string(dataset.size()) + " examples cannot fill " +
                          std::to_string(num_shards) + " shards");

  std::vector<std::size_t> sorted(dataset.size());
  std::iota(sorted.begin(), sorted.end(), std::size_t{0});
  std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
    return dataset.examples[a].true_label() < dataset.examples[b].true_label();
  });

  std::vector<std::size_t> shard_order(num_shards);
  std::iota(shard_order.begin(), shard_order.end(), std::size_t{0});
  Rng rng = make_rng(derive_stream(seed, Stream::kPartition));
  std::shuffle(shard_order.begin(), shard_order.end(), rng);

  ClientPartition partition;
  partition.assignments.resize(num_clients);
  for (std::size_t c = 0; c < num_clients; ++c) {
    auto& client = partition.assignments[c];
    for (std::size_t s = 0; s < shards_per_client; ++s) {
      const std::size_t shard = shard_order[c * shards_per_client + s];
      client.insert(client.end(), sorted.begin() + static_cast<std::ptrdiff_t>(shard * shard_size),
                    sorted.begin() + static_cast<std::ptrdiff_t>((shard + 1) * shard_size));
    }
    std::sort(client.begin(), client.end());
  }
  return partition;
}

ClientPartition dirichlet_partition(const Dataset& dataset, std::size_t num_clients, double beta,
                                    std::uint64_t seed) {
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw ConfigError("partition.beta", "must be a positive number");
  if (num_clients == 0) throw ConfigError("clients", "must be positive");
  if (dataset.size() < num_clients)
    throw ConfigError("clients", "more clients than examples");

  Rng rng = make_rng(derive_stream(seed, Stream::kPartition));
  std::gamma_distribution<double> gamma(beta, 1.0);

  std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i)
    by_class.at(static_cast<std::size_t>(dataset.examples[i].true_label())).push_back(i);

  ClientPartition partition;
  partition.assignments.resize(num_clients);
  std::vector<double> props(num_clients);
  for (auto& members : by_class) {
    if (members.empty()) continue;
    std::shuffle(members.begin(), members.end(), rng);
    double total = 0.0;
    for (double& p : props) total += (p = gamma(rng));
    if (!(total > 0.0)) {
      // Every draw underflowed; the limit of a tiny beta is a one-hot vector.
      std::fill(props.begin(), props.end(), 0.0);
      props[std::uniform_int_distribution<std::size_t>(0, num_clients - 1)(rng)] = 1.0;
      total = 1.0;
    }
    const auto n = static_cast<double>(members.size());
    double cumulative = 0.0;
    std::size_t begin = 0;
    for (std::size_t c = 0; c < num_clients; ++c) {
      cumulative += props[c];
      std::size_t end = c + 1 == num_clients
                            ? members.size()
                            : std::min(members.size(),
                                       static_cast<std::size_t>(std::llround(cumulative / total * n)));
      end = std::max(end, begin);
      auto& client = partition.assignments[c];
      client.insert(client.end(), members.begin() + static_cast<std::ptrdiff_t>(begin),
                    members.begin() + static_cast<std::ptrdiff_t>(end));
      begin = end;
    }
  }

  for (auto& client : partition.assignments) std::sort(client.begin(), client.end());
  while (true) {
    auto empty = std::find_if(partition.assignments.begin(), partition.assignments.end(),
                              [](const auto& a) { return a.empty(); });
    if (empty == partition.assignments.end()) break;
    auto largest = std::max_element(
        partition.assignments.begin(), partition.assignments.end(),
        [](const auto& a, const auto& b) { return a.size() < b.size(); });
    empty->push_back(largest->back());
    largest->pop_back();
  }
  return partition;
}

std::vector<double> linear_noise_schedule(std::size_t num_clients, double lo, double hi) {
  if (!(0.0 <= lo && lo <= hi && hi <= 1.0))
    throw ConfigError("noise.lo", "need 0 <= lo <= hi <= 1");
  if (num_clients == 0) throw ConfigError("clients", "must be positive");
  if (num_clients == 1) return {(lo + hi) / 2.0};
  std::vector<double> rates(num_clients);
  const double denom = static_cast<double>(num_clients - 1);
  for (std::size_t i = 0; i < num_clients; ++i)
    rates[i] = lo + (hi - lo) * static_cast<double>(i) / denom;
  return rates;
}

std::vector<int> NoiseSpec::cyclic_map(std::size_t num_classes) {
  std::vector<int> map(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) map[c] = static_cast<int>((c + 1) % num_classes);
  return map;
}

const char* to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kClean: return "clean";
    case NoiseKind::kSymmetric: return "symmetric";
    case NoiseKind::kAsymmetric: return "asymmetric";
    case NoiseKind::kMixed: return "mixed";
  }
  return "clean";
}

NoiseKind noise_kind_from_string(const std::string& name) {
  if (name == "clean") return NoiseKind::kClean;
  if (name == "symmetric") return NoiseKind::kSymmetric;
  if (name == "asymmetric") return NoiseKind::kAsymmetric;
  if (name == "mixed") return NoiseKind::kMixed;
  throw ConfigError("noise.type", "unknown noise type '" + name + "'");
}

NoiseSpec make_noise_spec(NoiseKind kind, const std::vector<double>& rates,
                          std::size_t num_classes) {
  NoiseSpec spec;
  spec.asymmetric_map = NoiseSpec::cyclic_map(num_classes);
  const std::size_t half = (rates.size() + 1) / 2;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    NoiseType type = NoiseType::kClean;
    switch (kind) {
      case NoiseKind::kClean: type = NoiseType::kClean; break;
      case NoiseKind::kSymmetric: type = NoiseType::kSymmetric; break;
      case NoiseKind::kAsymmetric: type = NoiseType::kAsymmetric; break;
      case NoiseKind::kMixed: type = i < half ? NoiseType::kSymmetric : NoiseType::kAsymmetric; break;
    }
    spec.clients.push_back({type, kind == NoiseKind::kClean ? 0.0 : rates[i]});
  }
  return spec;
}

namespace {

void validate_asymmetric_map(const std::vector<int>& map, std::size_t num_classes) {
  if (map.size() != num_classes)
    throw ConfigError("noise.asymmetric_map", "must name a target for every class");
  std::vector<char> used(num_classes, 0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const int target = map[c];
    if (target < 0 || static_cast<std::size_t>(target) >= num_classes)
      throw ConfigError("noise.asymmetric_map", "target class out of range");
    if (static_cast<std::size_t>(target) == c)
      throw ConfigError("noise.asymmetric_map", "class mapped onto itself");
    if (used[static_cast<std::size_t>(target)])
      throw ConfigError("noise.asymmetric_map", "two classes share a target");
    used[static_cast<std::size_t>(target)] = 1;
  }
}

}  // namespace

Dataset inject_noise(const Dataset& dataset, const ClientPartition& partition,
                     const NoiseSpec& spec, std::uint64_t seed) {
  if (spec.clients.size() != partition.num_clients())
    throw ConfigError("noise", "spec must cover every client");
  const bool any_asymmetric =
      std::any_of(spec.clients.begin(), spec.clients.end(), [](const ClientNoise& n) {
        return n.type == NoiseType::kAsymmetric && n.rate > 0.0;
      });
  if (any_asymmetric) validate_asymmetric_map(spec.asymmetric_map, dataset.num_classes);

  Dataset noisy = dataset;
  for (std::size_t c = 0; c < partition.num_clients(); ++c) {
    const ClientNoise& noise = spec.clients[c];
    if (!(noise.rate >= 0.0 && noise.rate <= 1.0))
      throw ConfigError("noise", "rates must lie in [0, 1]");
    if (noise.type == NoiseType::kClean || noise.rate == 0.0) continue;

    Rng rng = make_rng(derive_stream(seed, Stream::kNoise, {c}));
    std::vector<std::size_t> members = partition.assignments[c];
    const auto count = static_cast<std::size_t>(
        std::llround(noise.rate * static_cast<double>(members.size())));
    // Partial Fisher-Yates: the first `count` entries are a uniform sample.
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, members.size() - 1);
      std::swap(members[i], members[pick(rng)]);
    }
    std::uniform_int_distribution<int> other(0, static_cast<int>(dataset.num_classes) - 2);
    for (std::size_t i = 0; i < count; ++i) {
      LabeledExample& ex = noisy.examples[members[i]];
      const int truth = ex.true_label();
      int label = truth;
      if (noise.type == NoiseType::kSymmetric) {
        const int r = other(rng);
        label = r < truth ? r : r + 1;
      } else {
        label = spec.asymmetric_map[static_cast<std::size_t>(truth)];
      }
      ex.set_observed_label(label);
    }
  }
  return noisy;
}

void write_dataset(const Dataset& dataset, std::ostream& out) {
  for (const auto& ex : dataset.examples) {
    for (double v : ex.features()) out << format_double(v) << ',';
    out << ex.true_label() << ',' << ex.observed_label() << '\n';
  }
}

Dataset read_dataset(std::istream& in, std::size_t num_classes) {
  Dataset dataset;
  std::string line;
  std::size_t line_no = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split(line, ',');
    if (fields.size() < 3)
      throw ContractViolation("dataset line " + std::to_string(line_no) + ": too few fields");
    const std::size_t dim = fields.size() - 2;
    if (dataset.dim == 0) dataset.dim = dim;
    if (dim != dataset.dim)
      throw ContractViolation("dataset line " + std::to_string(line_no) + ": ragged feature count");
    try {
      std::vector<double> x(dim);
      for (std::size_t d = 0; d < dim; ++d) x[d] = parse_double(fields[d]);
      const auto truth = static_cast<int>(parse_int(fields[dim]));
      const auto observed = static_cast<int>(parse_int(fields[dim + 1]));
      if (truth < 0 || observed < 0) throw std::invalid_argument("negative label");
      max_label = std::max({max_label, truth, observed});
      dataset.examples.emplace_back(std::move(x), truth, observed);
    } catch (const std::invalid_argument& e) {
      throw ContractViolation("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  const auto inferred = static_cast<std::size_t>(max_label + 1);
  if (num_classes != 0 && inferred > num_classes)
    throw ContractViolation("dataset: label exceeds declared class count");
  dataset.num_classes = num_classes != 0 ? num_classes : inferred;
  return dataset;
}

}  // namespace fedrn
