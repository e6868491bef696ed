// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit status if
// any criterion fails. Criteria 5 to 9 run the desk setup in specs/desk.spec.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fedrn/experiment.hpp"
#include "fedrn/gmm.hpp"
#include "fedrn/metrics.hpp"
#include "fedrn/model.hpp"
#include "fedrn/reliability.hpp"
#include "fedrn/selection.hpp"
#include "fedrn/text.hpp"

using namespace fedrn;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  double seconds = 0.0;  // work attributable to the criterion
};

double since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------- 1: EM

Outcome em_soundness() {
  const auto start = Clock::now();
  Outcome out;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(10, 400);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_drop = 0.0, worst_sum = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(size(rng));
    if (trial % 2 == 0) {
      // Two components with random location, scale and share.
      std::normal_distribution<double> low(unit(rng), 0.05 + unit(rng));
      std::normal_distribution<double> high(2.0 + 3.0 * unit(rng), 0.05 + unit(rng));
      const double share = 0.1 + 0.8 * unit(rng);
      for (auto& x : v) x = std::abs(unit(rng) < share ? low(rng) : high(rng));
    } else {
      std::gamma_distribution<double> one(1.0 + 3.0 * unit(rng), 0.5);
      for (auto& x : v) x = one(rng);
    }
    const auto fit = fit_em_traced(v);
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i)
      worst_drop = std::max(worst_drop, fit.log_likelihood[i - 1] - fit.log_likelihood[i]);
    for (double x : v)
      worst_sum = std::max(worst_sum, std::abs(clean_posterior(fit.model, x) +
                                               noisy_posterior(fit.model, x) - 1.0));
  }

  std::uniform_real_distribution<double> jitter(-1e-3, 1e-3);
  std::vector<double> fixture;
  for (int i = 0; i < 50; ++i) fixture.push_back(0.1 + jitter(rng));
  for (int i = 0; i < 50; ++i) fixture.push_back(2.0 + jitter(rng));
  // Cluster means of the fixture, split at the midpoint of the two modes.
  double lo_sum = 0, hi_sum = 0;
  for (double x : fixture) (x < 1.05 ? lo_sum : hi_sum) += x;
  const double lo_mean = lo_sum / 50, hi_mean = hi_sum / 50;
  const auto g = fit_em(fixture);
  const double mean_err = std::max(std::abs(g.clean.mean - lo_mean), std::abs(g.noisy.mean - hi_mean));

  out.seconds = since(start);
  out.pass = worst_drop <= 1e-9 && worst_sum <= 1e-12 && mean_err <= 0.05 && out.seconds < 5.0;
  out.detail = "max ll drop " + format_double(worst_drop) + ", max |post sum - 1| " +
               format_double(worst_sum) + ", fixture mean error " + fmt(mean_err, 5) +
               ", " + fmt(out.seconds, 2) + " s (limit 5)";
  return out;
}

// ---------------------------------------------------------- 2: gradients

Outcome gradient_check() {
  const auto start = Clock::now();
  Outcome out;
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> width(2, 5);
  std::normal_distribution<double> normal(0.0, 0.7);
  double worst = 0.0;
  const Activation acts[] = {Activation::kTanh, Activation::kRelu, Activation::kIdentity};
  for (int trial = 0; trial < 20; ++trial) {
    ModelShape shape{width(rng), {width(rng), width(rng)}, width(rng), acts[trial % 3]};
    ModelParams m = zero_model(shape);
    auto flat = m.flatten();
    for (auto& v : flat) v = normal(rng);  // biases too, keeping ReLUs off their kink
    m.assign_flat(flat);
    std::vector<LabeledExample> data;
    std::uniform_int_distribution<std::size_t> label(0, shape.num_classes - 1);
    for (int i = 0; i < 5; ++i) {
      std::vector<double> x(shape.input_dim);
      for (auto& v : x) v = normal(rng);
      const auto y = label(rng);
      data.emplace_back(std::move(x), y, y);
    }
    const auto analytic = mean_loss_gradient(m, data).flatten();
    const double h = 1e-6;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      auto probe = flat;
      probe[i] = flat[i] + h;
      m.assign_flat(probe);
      const double up = mean_loss(m, data);
      probe[i] = flat[i] - h;
      m.assign_flat(probe);
      const double down = mean_loss(m, data);
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max(std::abs(numeric), std::abs(analytic[i]));
      if (scale >= 1e-8) worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
    }
    m.assign_flat(flat);
  }
  out.seconds = since(start);
  out.pass = worst <= 1e-4 && out.seconds < 10.0;
  out.detail = "max relative error " + format_double(worst) + " over 20 models, " +
               fmt(out.seconds, 2) + " s (limit 10)";
  return out;
}

// ------------------------------------------------------- 3: aggregation

Outcome aggregation_exactness() {
  const auto start = Clock::now();
  Outcome out;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> count(1, 6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const ModelShape shape{3, {4}, 3, Activation::kRelu};
    const int n = count(rng);
    std::vector<ModelParams> models;
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) models.push_back(init_model(shape, rng()));
    double total = 0;
    for (auto& x : w) total += (x = unit(rng));
    for (auto& x : w) x /= total;
    const auto got = average_params(models, w).flatten();
    for (std::size_t j = 0; j < got.size(); ++j) {
      long double expect = 0;
      for (int i = 0; i < n; ++i) expect += static_cast<long double>(w[i]) * models[i].flatten()[j];
      worst = std::max(worst, static_cast<double>(std::abs(got[j] - expect)));
    }
  }
  const auto model = init_model(ModelShape{4, {6, 5}, 3, Activation::kTanh}, 9);
  std::vector<ModelParams> same{model, model, model, model};
  const std::vector<double> w{0.1, 0.2, 0.3, 0.4};
  const bool identical = average_params(same, w) == model;
  out.seconds = since(start);
  out.pass = worst <= 1e-12 && identical;
  out.detail = "max |avg - oracle| " + format_double(worst) + " over 50 cases, identical models " +
               (identical ? "returned exactly" : "NOT returned exactly");
  return out;
}

// ------------------------------------------------------- 4: reliability

Outcome reliability_properties() {
  const auto start = Clock::now();
  Outcome out;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::gamma_distribution<double> gamma(0.7);

  double asym = 0.0;
  bool spans = true;
  double weight_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Prediction> outputs(8);
    for (auto& p : outputs) {
      p.probs.resize(10);
      double total = 0;
      for (auto& v : p.probs) total += (v = gamma(rng) + 1e-12);
      for (auto& v : p.probs) v /= total;
    }
    const auto sim = similarity_matrix(outputs);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j)
        asym = std::max(asym, std::abs(sim.normalized[i][j] - sim.normalized[j][i]));

    std::vector<double> acc(8);
    for (auto& a : acc) a = unit(rng);
    const auto ex = expertise_scores(acc);
    spans = spans && *std::min_element(ex.begin(), ex.end()) == 0.0 &&
            *std::max_element(ex.begin(), ex.end()) == 1.0;

    // Ensemble weights read back through one-hot posteriors.
    const auto r = reliability(ex, sim.normalized, 0.6);
    std::vector<double> rel{r[0][0], r[0][3], r[0][5]};
    std::vector<std::vector<double>> onehot(3, std::vector<double>(3, 0.0));
    for (int m = 0; m < 3; ++m) onehot[m][m] = 1.0;
    const auto weights = ensemble_clean_prob(onehot, rel);
    weight_err = std::max(weight_err,
                          std::abs(std::accumulate(weights.begin(), weights.end(), 0.0) - 1.0));
  }

  int mismatches = 0;
  std::uniform_int_distribution<int> coarse(0, 20);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<NeighborScore> row;
    for (ClientId id = 0; id < 12; ++id) row.push_back({id, coarse(rng) / 20.0});
    std::shuffle(row.begin(), row.end(), rng);
    const ClientId target = trial % 12;
    const std::size_t k = 1 + trial % 5;
    auto sorted = row;
    std::erase_if(sorted, [&](const NeighborScore& s) { return s.id == target; });
    std::sort(sorted.begin(), sorted.end(), [](const NeighborScore& a, const NeighborScore& b) {
      return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    std::vector<ClientId> oracle;
    for (std::size_t i = 0; i < k; ++i) oracle.push_back(sorted[i].id);
    mismatches += top_k_neighbors(target, row, k) != oracle;
  }

  out.seconds = since(start);
  out.pass = asym <= 1e-12 && spans && weight_err <= 1e-12 && mismatches == 0;
  out.detail = "max asymmetry " + format_double(asym) + ", expertise spans [0,1] " +
               (spans ? "yes" : "NO") + ", max |sum R' - 1| " + format_double(weight_err) +
               ", top-k mismatches " + std::to_string(mismatches) + "/1000";
  return out;
}

// ------------------------------------------------------------ desk runs

struct Run {
  SimulationResult result;
  double seconds = 0.0;
};

class DeskRuns {
 public:
  DeskRuns(ExperimentSpec spec, unsigned threads) : spec_(std::move(spec)), threads_(threads) {}

  const ExperimentSpec& spec() const { return spec_; }

  // Cached per (variant label, seed) so criteria sharing a run reuse it.
  const Run& get(const std::string& label, std::uint64_t seed,
                 const std::function<void(SimulationConfig&)>& tweak) {
    const auto key = label + "#" + std::to_string(seed);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    SimulationConfig cfg = spec_.sim;
    cfg.master_seed = seed;
    tweak(cfg);
    const auto start = Clock::now();
    Run run{run_simulation(cfg, scenario(cfg), RunOptions{threads_}), 0.0};
    run.seconds = since(start);
    return cache_.emplace(key, std::move(run)).first->second;
  }

 private:
  const Scenario& scenario(const SimulationConfig& cfg) {
    // Scenarios depend on the seed and the noise range only.
    const auto key = std::to_string(cfg.master_seed) + "/" + format_double(cfg.noise.lo) + "/" +
                     format_double(cfg.noise.hi);
    auto it = scenarios_.find(key);
    if (it == scenarios_.end()) it = scenarios_.emplace(key, build_scenario(cfg)).first;
    return it->second;
  }

  ExperimentSpec spec_;
  unsigned threads_;
  std::map<std::string, Run> cache_;
  std::map<std::string, Scenario> scenarios_;
};

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean(a), mb = mean(b);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double final_accuracy(const Run& run) { return run.result.rounds.back().test_accuracy; }

// Mean of the per-round participant means over the rounds after warm-up.
std::pair<double, double> post_warmup_lp_lr(const Run& run, int warmup) {
  std::vector<double> lp, lr;
  for (const auto& m : run.result.rounds) {
    if (m.round < warmup) continue;
    if (m.label_precision) lp.push_back(*m.label_precision);
    if (m.label_recall) lr.push_back(*m.label_recall);
  }
  return {mean(lp), mean(lr)};
}

const auto kAsIs = [](SimulationConfig&) {};

// -------------------------------------------- 5: expertise vs noise rate

Outcome expertise_correlation(DeskRuns& desk) {
  Outcome out;
  double total = 0.0;
  std::string per_seed;
  for (auto seed : desk.spec().seeds()) {
    const auto& run = desk.get("noise0.4", seed, [](SimulationConfig& c) { c.noise.hi = 0.4; });
    out.seconds += run.seconds;
    std::vector<double> acc, clean;
    for (std::size_t c = 0; c < run.result.noise_rates.size(); ++c) {
      acc.push_back(run.result.accuracy_after_warmup[c].value());
      clean.push_back(1.0 - run.result.noise_rates[c]);
    }
    const double r = pearson(acc, clean);
    total += r;
    per_seed += (per_seed.empty() ? "" : " ") + fmt(r, 3);
  }
  const double avg = total / static_cast<double>(desk.spec().seeds().size());
  out.pass = avg >= 0.8 && out.seconds < 180.0;
  out.detail = "mean Pearson r " + fmt(avg, 3) + " (seeds: " + per_seed + "), need >= 0.8, " +
               fmt(out.seconds, 1) + " s (limit 180)";
  return out;
}

// ---------------------------------------------- 6: selection quality

Outcome selection_quality(DeskRuns& desk) {
  Outcome out;
  double lp2 = 0, lr2 = 0, lp0 = 0, lr0 = 0;
  const auto seeds = desk.spec().seeds();
  for (auto seed : seeds) {
    const auto& k2 = desk.get("k2", seed, kAsIs);
    const auto& k0 = desk.get("k0", seed, [](SimulationConfig& c) { c.k = 0; });
    out.seconds += k2.seconds + k0.seconds;
    const int warmup = desk.spec().sim.resolved_warmup();
    const auto [a, b] = post_warmup_lp_lr(k2, warmup);
    const auto [c, d] = post_warmup_lp_lr(k0, warmup);
    lp2 += a / seeds.size();
    lr2 += b / seeds.size();
    lp0 += c / seeds.size();
    lr0 += d / seeds.size();
  }
  out.pass = lp2 - lp0 >= 0.03 && lr2 - lr0 >= 0.03 && out.seconds < 600.0;
  out.detail = "LP k=2 " + fmt(lp2) + " vs k=0 " + fmt(lp0) + " (+" + fmt(lp2 - lp0) +
               "), LR k=2 " + fmt(lr2) + " vs k=0 " + fmt(lr0) + " (+" + fmt(lr2 - lr0) +
               "), need +0.03 each, " + fmt(out.seconds, 1) + " s (limit 600)";
  return out;
}

// ------------------------------------------ 7, 8, 9: final accuracies

struct Finals {
  double oracle = 0, k2 = 0, k1 = 0, fedavg = 0, k3 = 0, random = 0;
  double seconds_7 = 0, seconds_8 = 0, seconds_9 = 0;
};

Finals final_accuracies(DeskRuns& desk) {
  Finals f;
  const auto seeds = desk.spec().seeds();
  const double n = static_cast<double>(seeds.size());
  for (auto seed : seeds) {
    const auto& oracle = desk.get("oracle", seed, [](SimulationConfig& c) { c.method = Method::kOracle; });
    const auto& k2 = desk.get("k2", seed, kAsIs);
    const auto& k1 = desk.get("k1", seed, [](SimulationConfig& c) { c.k = 1; });
    const auto& avg = desk.get("fedavg", seed, [](SimulationConfig& c) { c.method = Method::kFedAvg; });
    const auto& k3 = desk.get("k3", seed, [](SimulationConfig& c) { c.k = 3; });
    const auto& rnd = desk.get("random", seed, [](SimulationConfig& c) {
      c.neighbor_policy = NeighborPolicy::kRandom;
    });
    f.oracle += final_accuracy(oracle) / n;
    f.k2 += final_accuracy(k2) / n;
    f.k1 += final_accuracy(k1) / n;
    f.fedavg += final_accuracy(avg) / n;
    f.k3 += final_accuracy(k3) / n;
    f.random += final_accuracy(rnd) / n;
    f.seconds_7 += oracle.seconds + k2.seconds + k1.seconds + avg.seconds;
    f.seconds_8 += k3.seconds + k2.seconds;
    f.seconds_9 += rnd.seconds + k2.seconds;
  }
  return f;
}

Outcome robustness_order(const Finals& f) {
  Outcome out;
  out.seconds = f.seconds_7;
  const double gap = 100.0 * (f.k2 - f.fedavg);
  out.pass = f.oracle >= f.k2 && f.k2 >= f.k1 && f.k1 >= f.fedavg && gap >= 5.0 &&
             out.seconds < 900.0;
  out.detail = "oracle " + fmt(f.oracle) + " >= k2 " + fmt(f.k2) + " >= k1 " + fmt(f.k1) +
               " >= fedavg " + fmt(f.fedavg) + ", k2 - fedavg " + fmt(gap, 2) +
               " points (need 5), " + fmt(out.seconds, 1) + " s (limit 900)";
  return out;
}

Outcome k_saturation(const Finals& f) {
  Outcome out;
  out.seconds = f.seconds_8;
  const double diff = 100.0 * (f.k3 - f.k2);
  out.pass = diff <= 2.0;
  out.detail = "k3 " + fmt(f.k3) + " - k2 " + fmt(f.k2) + " = " + fmt(diff, 2) +
               " points (need <= 2)";
  return out;
}

Outcome reliable_vs_random(const Finals& f) {
  Outcome out;
  out.seconds = f.seconds_9;
  out.pass = f.k2 >= f.random;
  out.detail = "reliable " + fmt(f.k2) + " vs random " + fmt(f.random);
  return out;
}

// ---------------------------------------------------- 10: determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism(const ExperimentSpec& desk, unsigned threads) {
  const auto start = Clock::now();
  Outcome out;
  ExperimentSpec spec = desk;
  spec.repeat = 1;
  spec.sim.rounds = 15;
  const auto root = fs::temp_directory_path() / "fedrn_acceptance_determinism";
  fs::remove_all(root);
  const unsigned parallel = std::max(2u, threads);
  run_experiment(spec, root / "a", RunOptions{parallel});
  run_experiment(spec, root / "b", RunOptions{parallel});
  run_experiment(spec, root / "c", RunOptions{1});
  int files = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    const auto name = entry.path().filename();
    ++files;
    const auto a = slurp(entry.path());
    differing += a != slurp(root / "b" / name) || a != slurp(root / "c" / name);
  }
  fs::remove_all(root);
  out.seconds = since(start);
  out.pass = files >= 4 && differing == 0;
  out.detail = std::to_string(files) + " output files compared across two " +
               std::to_string(parallel) + "-thread runs and one sequential run, " +
               std::to_string(differing) + " differ";
  return out;
}

// -------------------------------------------------------- 11: privacy

Outcome privacy(const ExperimentSpec& desk, unsigned threads) {
  const auto start = Clock::now();
  Outcome out;
  SimulationConfig cfg = desk.sim;
  cfg.rounds = 8;
  cfg.warmup_rounds = 2;

  // The instrument must see reads made on the calling thread.
  const auto scenario = build_scenario(cfg);
  std::uint64_t control = 0;
  {
    audit::DataAccessScope scope;
    (void)scenario.client_data[0][0].observed_label();
    (void)scenario.client_data[0][0].features();
    control = scope.count();
  }

  std::uint64_t server = 0;
  for (Method m : {Method::kFedRn, Method::kFedAvg, Method::kSmallLoss, Method::kOracle}) {
    cfg.method = m;
    server += run_simulation(cfg, scenario, RunOptions{threads}).server_data_touches;
  }
  cfg.method = Method::kFedRn;
  cfg.neighbor_policy = NeighborPolicy::kRandom;
  server += run_simulation(cfg, scenario, RunOptions{threads}).server_data_touches;

  out.seconds = since(start);
  out.pass = control == 2 && server == 0;
  out.detail = "instrument control reads " + std::to_string(control) +
               "/2, example reads inside server phases " + std::to_string(server) +
               " across fedrn, fedavg, small_loss, oracle and random-neighbor runs";
  return out;
}

fs::path desk_spec_path(int argc, char** argv) {
  if (argc > 1) return argv[1];
  return FEDRN_DESK_SPEC;
}

}  // namespace

int main(int argc, char** argv) {
  const ExperimentSpec desk = load_experiment_spec(desk_spec_path(argc, argv));
  const unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  DeskRuns runs(desk, threads);

  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    failures += !o.pass;
    std::printf("criterion %2d %-28s %s  %s\n", id, name, o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gmm-em soundness", em_soundness());
  report(2, "gradient check", gradient_check());
  report(3, "aggregation exactness", aggregation_exactness());
  report(4, "reliability properties", reliability_properties());
  report(5, "expertise-noise correlation", expertise_correlation(runs));
  report(6, "selection quality", selection_quality(runs));
  const Finals finals = final_accuracies(runs);
  report(7, "robustness ordering", robustness_order(finals));
  report(8, "k saturation", k_saturation(finals));
  report(9, "reliable beats random", reliable_vs_random(finals));
  report(10, "determinism", determinism(desk, threads));
  report(11, "privacy contract", privacy(desk, threads));

  std::printf("%d of 11 criteria passed\n", 11 - failures);
  return failures == 0 ? 0 : 1;
}
