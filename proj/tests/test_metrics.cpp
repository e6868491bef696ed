#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fedrn/data.hpp"
#include "fedrn/metrics.hpp"
#include "json.hpp"

using namespace fedrn;

namespace {

// Ten examples; the ones at odd positions below 6 plus position 9 are noisy.
std::vector<LabeledExample> ten_examples() {
  std::vector<LabeledExample> data;
  for (std::size_t i = 0; i < 10; ++i) {
    const bool noisy = (i < 6 && i % 2 == 1) || i == 9;
    data.emplace_back(std::vector<double>{double(i)}, 0, noisy ? 1 : 0);
  }
  return data;
}

}  // namespace

TEST_CASE("label_precision") {
  const auto data = ten_examples();
  const std::vector<std::size_t> clean_only{0, 2, 4};
  CHECK(label_precision(clean_only, data).value() == 1.0);
  CHECK_FALSE(label_precision(std::vector<std::size_t>{}, data).has_value());
  std::vector<std::size_t> all(10);
  for (std::size_t i = 0; i < 10; ++i) all[i] = i;
  CHECK(label_precision(all, data).value() == doctest::Approx(0.6));
  const std::vector<std::size_t> seven_clean{0, 2, 4, 6, 7, 8, 1, 3, 5, 9};
  CHECK(label_precision(std::span(seven_clean).first(9), data).value() ==
        doctest::Approx(6.0 / 9.0));
}

TEST_CASE("label precision and recall against a brute-force recount") {
  const auto blobs = make_blobs(3, 30, 0.5, 2, 4);
  ClientPartition one{{{}}};
  for (std::size_t i = 0; i < blobs.train.size(); ++i) one.assignments[0].push_back(i);
  const auto data =
      inject_noise(blobs.train, one, make_noise_spec(NoiseKind::kSymmetric, {0.4}, 3), 2).examples;
  std::mt19937_64 rng(5);
  std::bernoulli_distribution pick(0.5);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::size_t> sel;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (pick(rng)) sel.push_back(i);
    std::size_t clean_sel = 0, clean_all = 0;
    for (auto i : sel) clean_sel += data[i].observed_label() == data[i].true_label();
    for (const auto& ex : data) clean_all += ex.observed_label() == ex.true_label();
    const double lp = label_precision(sel, data).value();
    const double lr = label_recall(sel, data).value();
    CHECK(lp == doctest::Approx(double(clean_sel) / sel.size()));
    CHECK(lr == doctest::Approx(double(clean_all ? clean_sel : 0) / clean_all));
    CHECK(lp >= 0.0);
    CHECK(lp <= 1.0);
    // Enlarging the selection never lowers recall.
    auto bigger = sel;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (i % 5 == 0 && !std::binary_search(sel.begin(), sel.end(), i)) bigger.push_back(i);
    std::sort(bigger.begin(), bigger.end());
    CHECK(label_recall(bigger, data).value() >= lr);
  }
}

TEST_CASE("label_recall") {
  const auto data = ten_examples();
  std::vector<std::size_t> all(10);
  for (std::size_t i = 0; i < 10; ++i) all[i] = i;
  CHECK(label_recall(all, data).value() == 1.0);
  CHECK(label_recall(std::vector<std::size_t>{}, data).value() == 0.0);
  std::vector<LabeledExample> all_noisy{{{0.0}, 0, 1}, {{1.0}, 1, 0}};
  CHECK_FALSE(label_recall(std::vector<std::size_t>{0}, all_noisy).has_value());
}

TEST_CASE("test_accuracy") {
  SUBCASE("zero model on balanced data is near chance") {
    const auto blobs = make_blobs(4, 200, 0.5, 3, 1);
    const auto m = zero_model(ModelShape{3, {4}, 4, Activation::kRelu});
    // argmax of a uniform prediction is class 0, one quarter of a balanced set
    CHECK(std::abs(test_accuracy(m, blobs.test.examples) - 0.25) <= 0.05);
    CHECK(test_accuracy(m, blobs.test.examples) == test_accuracy(m, blobs.test.examples));
  }
  SUBCASE("scores against the true label") {
    const auto m = zero_model(ModelShape{1, {}, 2, Activation::kIdentity});
    std::vector<LabeledExample> data{{{0.0}, 0, 1}, {{0.0}, 1, 0}};
    CHECK(test_accuracy(m, data) == 0.5);
  }
  SUBCASE("a trained model on separable data") {
    const auto blobs = make_blobs(3, 100, 0.05, 4, 2);
    auto m = init_model(ModelShape{4, {8}, 3, Activation::kRelu}, 1);
    m = sgd_train(m, blobs.train.examples, TrainConfig{0.1, 0.5, 20, 16, 2});
    CHECK(test_accuracy(m, blobs.test.examples) >= 0.99);
  }
}

TEST_CASE("accuracy_spread") {
  const auto s = accuracy_spread(std::vector<double>{0.2, 0.8});
  CHECK(s.min == 0.2);
  CHECK(s.max == 0.8);
  CHECK(s.stddev == doctest::Approx(0.3));
  const auto same = accuracy_spread(std::vector<double>{0.4, 0.4, 0.4});
  CHECK(same.stddev == 0.0);
  CHECK(same.min == 0.4);
  const auto a = accuracy_spread(std::vector<double>{0.1, 0.5, 0.3, 0.9});
  const auto b = accuracy_spread(std::vector<double>{0.9, 0.3, 0.1, 0.5});
  CHECK(a.stddev == b.stddev);
  CHECK(a.min == b.min);
}

TEST_CASE("metrics exports") {
  RoundMetrics r0;
  r0.round = 0;
  r0.test_accuracy = 0.5;
  r0.per_client_accuracy = {0.25, 0.75};
  r0.train_set_size = {10, 20};
  RoundMetrics r1 = r0;
  r1.round = 1;
  r1.label_precision = 0.75;
  r1.label_recall = 0.1;
  r1.empty_clean_sets = 1;
  std::vector<RoundMetrics> rounds{r0, r1};

  std::ostringstream csv;
  write_metrics_csv(rounds, csv);
  std::istringstream lines(csv.str());
  std::string header, first, second;
  std::getline(lines, header);
  std::getline(lines, first);
  std::getline(lines, second);
  CHECK(header ==
        "round,test_accuracy,lp_mean,lr_mean,acc_min,acc_max,acc_std,clean_set_mean_size,"
        "empty_clean_flags,degenerate_gmm_count");
  CHECK(first == "0,0.5,,,0.25,0.75,0.25,15,0,0");
  CHECK(second == "1,0.5,0.75,0.1,0.25,0.75,0.25,15,1,0");

  std::ostringstream js;
  write_metrics_json(rounds, js);
  const auto doc = nlohmann::json::parse(js.str());
  REQUIRE(doc.size() == 2);
  CHECK(doc[0]["lp_mean"].is_null());
  CHECK(doc[1]["lp_mean"].get<double>() == 0.75);
  CHECK(doc[1]["empty_clean_flags"].get<int>() == 1);
  for (const char* col : kMetricsColumns) CHECK(doc[0].contains(col));
}
