#include "fedrn/metrics.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <numeric>
#include <ostream>

#include "json.hpp"

#include "fedrn/errors.hpp"
#include "fedrn/text.hpp"

namespace fedrn {

namespace {

std::size_t count_clean(std::span<const std::size_t> selected,
                        std::span<const LabeledExample> data) {
  std::size_t clean = 0;
  for (std::size_t i : selected) {
    if (i >= data.size()) throw ContractViolation("selected index out of range");
    if (data[i].is_clean()) ++clean;
  }
  return clean;
}

}  // namespace

std::optional<double> label_precision(std::span<const std::size_t> selected,
                                      std::span<const LabeledExample> client_data) {
  if (selected.empty()) return std::nullopt;
  return static_cast<double>(count_clean(selected, client_data)) /
         static_cast<double>(selected.size());
}

std::optional<double> label_recall(std::span<const std::size_t> selected,
                                   std::span<const LabeledExample> client_data) {
  const auto total_clean = static_cast<std::size_t>(
      std::count_if(client_data.begin(), client_data.end(),
                    [](const LabeledExample& ex) { return ex.is_clean(); }));
  if (total_clean == 0) return std::nullopt;
  return static_cast<double>(count_clean(selected, client_data)) /
         static_cast<double>(total_clean);
}

double test_accuracy(const ModelParams& model, std::span<const LabeledExample> test_set) {
  if (test_set.empty()) throw ContractViolation("test_accuracy: empty test set");
  std::size_t hits = 0;
  for (const auto& ex : test_set)
    if (static_cast<int>(argmax(forward(model, ex.features()).probs)) == ex.true_label()) ++hits;
  return static_cast<double>(hits) / static_cast<double>(test_set.size());
}

double mean(std::span<const double> values) {
  if (values.empty()) throw ContractViolation("mean of nothing");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double population_stddev(std::span<const double> values) {
  if (std::adjacent_find(values.begin(), values.end(), std::not_equal_to<>()) == values.end())
    return 0.0;
  const double m = mean(values);
  double sq = 0.0;
  for (double v : values) sq += (v - m) * (v - m);
  return std::sqrt(sq / static_cast<double>(values.size()));
}

Spread accuracy_spread(std::span<const double> per_client_accuracy) {
  if (per_client_accuracy.empty()) throw ContractViolation("accuracy_spread: no clients");
  // Sorted copy so the result is independent of client order.
  std::vector<double> v(per_client_accuracy.begin(), per_client_accuracy.end());
  std::sort(v.begin(), v.end());
  return {v.front(), v.back(), population_stddev(v)};
}

namespace {

struct Row {
  std::optional<double> values[10];
};

Row make_row(const RoundMetrics& m) {
  Row r;
  r.values[0] = m.round;
  r.values[1] = m.test_accuracy;
  r.values[2] = m.label_precision;
  r.values[3] = m.label_recall;
  if (!m.per_client_accuracy.empty()) {
    const Spread s = accuracy_spread(m.per_client_accuracy);
    r.values[4] = s.min;
    r.values[5] = s.max;
    r.values[6] = s.stddev;
  }
  if (!m.train_set_size.empty()) {
    double total = 0.0;
    for (auto n : m.train_set_size) total += static_cast<double>(n);
    r.values[7] = total / static_cast<double>(m.train_set_size.size());
  }
  r.values[8] = m.empty_clean_sets;
  r.values[9] = m.degenerate_gmms;
  return r;
}

}  // namespace

void write_metrics_csv(std::span<const RoundMetrics> rounds, std::ostream& out) {
  for (std::size_t c = 0; c < std::size(kMetricsColumns); ++c)
    out << (c ? "," : "") << kMetricsColumns[c];
  out << '\n';
  for (const auto& m : rounds) {
    const Row r = make_row(m);
    for (std::size_t c = 0; c < std::size(kMetricsColumns); ++c) {
      if (c) out << ',';
      if (r.values[c]) out << format_double(*r.values[c]);
    }
    out << '\n';
  }
}

void write_metrics_json(std::span<const RoundMetrics> rounds, std::ostream& out) {
  auto arr = nlohmann::json::array();
  for (const auto& m : rounds) {
    const Row r = make_row(m);
    nlohmann::json obj = nlohmann::json::object();
    for (std::size_t c = 0; c < std::size(kMetricsColumns); ++c)
      if (!r.values[c])
        obj[kMetricsColumns[c]] = nullptr;
      else if (c == 0 || c == 8 || c == 9)
        obj[kMetricsColumns[c]] = static_cast<long long>(*r.values[c]);
      else
        obj[kMetricsColumns[c]] = *r.values[c];
    arr.push_back(std::move(obj));
  }
  out << arr.dump(2) << '\n';
}

}  // namespace fedrn
