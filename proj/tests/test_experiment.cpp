#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fedrn/errors.hpp"
#include "fedrn/experiment.hpp"
#include "fedrn/text.hpp"

using namespace fedrn;
namespace fs = std::filesystem;

namespace {

constexpr const char* kSmallSpec = R"(# small desk run
clients = 6
participation_rate = 0.5
rounds = 4
warmup_rounds = 1
k = 2
model.hidden = 8
data.num_classes = 4
data.per_class = 30
data.dim = 4
train.learning_rate = 0.05
train.local_epochs = 1
train.batch_size = 8
noise.hi = 0.6
seed = 5
)";

ExperimentSpec small_spec() {
  std::istringstream in(kSmallSpec);
  return parse_experiment_spec(in);
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fedrn_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Final test accuracy from the last row of a metrics CSV.
double last_accuracy(const fs::path& csv) {
  const auto rows = lines_of(csv);
  const auto cells = split(rows.back(), ',');
  return parse_double(cells[1]);
}

}  // namespace

TEST_CASE("spec parsing") {
  const auto spec = small_spec();
  CHECK(spec.sim.num_clients == 6);
  CHECK(spec.sim.hidden == std::vector<std::size_t>{8});
  CHECK(spec.sim.master_seed == 5);
  CHECK(spec.sim.alpha == 0.6);  // defaulted

  SUBCASE("render then parse is a fixed point") {
    const auto text = render_experiment_spec(spec);
    std::istringstream in(text);
    CHECK(render_experiment_spec(parse_experiment_spec(in)) == text);
  }
  SUBCASE("errors carry line and field") {
    std::istringstream unknown("clients = 4\nbogus = 1\n");
    try {
      parse_experiment_spec(unknown);
      FAIL("expected SpecParseError");
    } catch (const SpecParseError& e) {
      CHECK(e.line() == 2);
      CHECK(e.field() == "bogus");
    }
    std::istringstream bad_value("alpha = lots\n");
    CHECK_THROWS_AS(parse_experiment_spec(bad_value), SpecParseError);
    std::istringstream bad_enum("method = fancy\n");
    CHECK_THROWS_AS(parse_experiment_spec(bad_enum), SpecParseError);
    std::istringstream no_equals("rounds 10\n");
    CHECK_THROWS_AS(parse_experiment_spec(no_equals), SpecParseError);
  }
  SUBCASE("invariant violations name the field") {
    auto s = spec;
    s.sim.k = 5;
    try {
      s.validate();
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.field() == "k");
    }
  }
}

TEST_CASE("run: zero rounds writes header-only CSVs") {
  auto spec = small_spec();
  spec.sim.rounds = 0;
  const auto dir = scratch("zero");
  run_experiment(spec, dir);
  CHECK(lines_of(dir / "metrics_seed5.csv").size() == 1);
  CHECK(lines_of(dir / "aggregate.csv").size() == 1);
  CHECK(fs::exists(dir / "resolved.spec"));
}

TEST_CASE("run: byte-identical output across runs and thread counts") {
  const auto spec = small_spec();
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  run_experiment(spec, a, RunOptions{1});
  run_experiment(spec, b, RunOptions{3});
  for (const char* name : {"metrics_seed5.csv", "metrics_seed5.json", "aggregate.csv",
                           "resolved.spec", "similarity_seed5.csv"})
    CHECK_MESSAGE(slurp(a / name) == slurp(b / name), name);
}

TEST_CASE("run: resolved spec echoes every defaulted field") {
  const auto dir = scratch("echo");
  run_experiment(small_spec(), dir);
  const auto text = slurp(dir / "resolved.spec");
  for (const char* key : {"alpha = 0.6", "em.max_iters = 100", "keep_fraction = 0.6",
                          "partition.type = shard", "warmup_rounds = 1"})
    CHECK_MESSAGE(text.find(key) != std::string::npos, key);
  std::istringstream in(text);
  CHECK(render_experiment_spec(parse_experiment_spec(in)) == text);
}

TEST_CASE("run: repeat=3 aggregate mean") {
  auto spec = small_spec();
  spec.repeat = 3;
  const auto dir = scratch("repeat");
  const auto summary = run_experiment(spec, dir);
  REQUIRE(summary.seeds == std::vector<std::uint64_t>{5, 6, 7});
  double hand = 0.0;
  for (auto seed : summary.seeds)
    hand += last_accuracy(dir / ("metrics_seed" + std::to_string(seed) + ".csv")) / 3.0;
  const auto rows = lines_of(dir / "aggregate.csv");
  REQUIRE(rows.size() == 6);
  CHECK(rows[4].rfind("mean,", 0) == 0);
  CHECK(parse_double(split(rows[4], ',')[1]) == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("compare") {
  auto spec = small_spec();
  spec.repeat = 2;
  SUBCASE("the same method twice gives identical columns") {
    const auto dir = scratch("cmp_same");
    compare_experiment(spec, {"fedavg", "fedavg"}, dir);
    const auto rows = lines_of(dir / "compare.csv");
    REQUIRE(rows.size() == 4);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto cells = split(rows[i], ',');
      CHECK(cells[1] == cells[2]);
    }
  }
  SUBCASE("oracle beats fedavg under heavy noise") {
    spec.sim.noise.lo = 0.6;
    spec.sim.noise.hi = 0.8;
    spec.sim.rounds = 8;
    const auto dir = scratch("cmp_oracle");
    compare_experiment(spec, {"oracle", "fedavg"}, dir);
    const auto rows = lines_of(dir / "compare.csv");
    for (std::size_t i = 1; i < rows.size() - 1; ++i) {
      const auto cells = split(rows[i], ',');
      CHECK(parse_double(cells[1]) >= parse_double(cells[2]));
    }
  }
  SUBCASE("fewer than two methods") {
    CHECK_THROWS_AS(compare_experiment(spec, {"fedrn"}, scratch("cmp_one")), ConfigError);
  }
}

TEST_CASE("sweep") {
  auto spec = small_spec();
  spec.sim.participation_rate = 1.0;
  SUBCASE("k from 1 to 5 gives five rows") {
    const auto dir = scratch("sweep_k");
    sweep_experiment(spec, "k", {"1", "2", "3", "4", "5"}, dir);
    const auto rows = lines_of(dir / "sweep.csv");
    CHECK(rows.size() == 6);
    CHECK(rows[0] == "k,seed_5,mean,std");
    CHECK(rows[3].rfind("3,", 0) == 0);
  }
  SUBCASE("a single value reproduces run") {
    const auto sweep_dir = scratch("sweep_one");
    const auto run_dir = scratch("sweep_run");
    sweep_experiment(spec, "alpha", {"0.6"}, sweep_dir);
    run_experiment(spec, run_dir);
    const auto rows = lines_of(sweep_dir / "sweep.csv");
    const auto cells = split(rows[1], ',');
    CHECK(parse_double(cells[1]) == last_accuracy(run_dir / "metrics_seed5.csv"));
  }
  SUBCASE("unknown parameter") {
    CHECK_THROWS_AS(sweep_experiment(spec, "rounds", {"3"}, scratch("sweep_bad")), ConfigError);
  }
}
