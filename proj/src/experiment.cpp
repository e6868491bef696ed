#include "fedrn/experiment.hpp"

#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include "fedrn/errors.hpp"
#include "fedrn/text.hpp"

namespace fedrn {

SpecParseError::SpecParseError(int line, std::string field, const std::string& message)
    : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                         (field.empty() ? message : field + ": " + message)),
      line_(line),
      field_(std::move(field)) {}

std::vector<std::uint64_t> ExperimentSpec::seeds() const {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < repeat; ++i) out.push_back(sim.master_seed + static_cast<std::uint64_t>(i));
  return out;
}

void ExperimentSpec::validate() const {
  if (repeat < 1) throw ConfigError("repeat", "must be at least 1");
  sim.validate();
}

namespace {

struct Field {
  const char* key;
  std::function<void(ExperimentSpec&, std::string_view)> set;
  std::function<std::string(const ExperimentSpec&)> get;
};

template <class T>
T parse_count(std::string_view v) {
  const long long n = parse_int(v);
  if (n < 0) throw std::invalid_argument("must not be negative");
  return static_cast<T>(n);
}

bool parse_bool(std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("not a boolean: '" + std::string(v) + "'");
}

template <class T, class Parse>
std::vector<T> parse_list(std::string_view v, Parse parse) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  for (auto part : split(v, ',')) out.push_back(parse(part));
  return out;
}

template <class T>
std::string join(const std::vector<T>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + std::to_string(values[i]);
  return s;
}

const std::vector<Field>& fields() {
  using S = ExperimentSpec;
  using V = std::string_view;
  static const std::vector<Field> table = {
      {"seed", [](S& s, V v) { s.sim.master_seed = parse_count<std::uint64_t>(v); },
       [](const S& s) { return std::to_string(s.sim.master_seed); }},
      {"repeat", [](S& s, V v) { s.repeat = static_cast<int>(parse_int(v)); },
       [](const S& s) { return std::to_string(s.repeat); }},
      {"method", [](S& s, V v) { s.sim.method = method_from_string(std::string(trim(v))); },
       [](const S& s) { return std::string(to_string(s.sim.method)); }},
      {"clients", [](S& s, V v) { s.sim.num_clients = parse_count<std::size_t>(v); },
       [](const S& s) { return std::to_string(s.sim.num_clients); }},
      {"participation_rate", [](S& s, V v) { s.sim.participation_rate = parse_double(v); },
       [](const S& s) { return format_double(s.sim.participation_rate); }},
      {"rounds", [](S& s, V v) { s.sim.rounds = static_cast<int>(parse_int(v)); },
       [](const S& s) { return std::to_string(s.sim.rounds); }},
      {"warmup_rounds", [](S& s, V v) { s.sim.warmup_rounds = static_cast<int>(parse_int(v)); },
       [](const S& s) { return std::to_string(s.sim.resolved_warmup()); }},
      {"k", [](S& s, V v) { s.sim.k = parse_count<std::size_t>(v); },
       [](const S& s) { return std::to_string(s.sim.k); }},
      {"alpha", [](S& s, V v) { s.sim.alpha = parse_double(v); },
       [](const S& s) { return format_double(s.sim.alpha); }},
      {"neighbor_policy",
       [](S& s, V v) { s.sim.neighbor_policy = neighbor_policy_from_string(std::string(trim(v))); },
       [](const S& s) { return std::string(to_string(s.sim.neighbor_policy)); }},
      {"fine_tune", [](S& s, V v) { s.sim.fine_tune = parse_bool(v); },
       [](const S& s) { return std::string(s.sim.fine_tune ? "true" : "false"); }},
      {"keep_fraction", [](S& s, V v) { s.sim.keep_fraction = parse_double(v); },
       [](const S& s) { return format_double(s.sim.keep_fraction); }},
      {"train.learning_rate", [](S& s, V v) { s.sim.train.learning_rate = parse_double(v); },
       [](const S& s) { return format_double(s.sim.train.learning_rate); }},
      {"train.momentum", [](S& s, V v) { s.sim.train.momentum = parse_double(v); },
       [](const S& s) { return format_double(s.sim.train.momentum); }},
      {"train.local_epochs",
       [](S& s, V v) { s.sim.train.local_epochs = static_cast<int>(parse_int(v)); },
       [](const S& s) { return std::to_string(s.sim.train.local_epochs); }},
      {"train.batch_size", [](S& s, V v) { s.sim.train.batch_size = static_cast<int>(parse_int(v)); },
       [](const S& s) { return std::to_string(s.sim.train.batch_size); }},
      {"model.hidden",
       [](S& s, V v) { s.sim.hidden = parse_list<std::size_t>(v, parse_count<std::size_t>); },
       [](const S& s) { return join(s.sim.hidden); }},
      {"model.activation",
       [](S& s, V v) { s.sim.activation = activation_from_string(std::string(trim(v))); },
       [](const S& s) { return std::string(to_string(s.sim.activation)); }},
      {"data.num_classes", [](S& s, V v) { s.sim.data.num_classes = parse_count<std::size_t>(v); },
       [](const S& s) { return std::to_string(s.sim.data.num_classes); }},
      {"data.per_class", [](S& s, V v) { s.sim.data.per_class = parse_count<std::size_t>(v); },
       [](const S& s) { return std::to_string(s.sim.data.per_class); }},
      {"data.spread", [](S& s, V v) { s.sim.data.spread = parse_double(v); },
       [](const S& s) { return format_double(s.sim.data.spread); }},
      {"data.dim", [](S& s, V v) { s.sim.data.dim = parse_count<std::size_t>(v); },
       [](const S& s) { return std::to_string(s.sim.data.dim); }},
      {"partition.type",
       [](S& s, V v) { s.sim.partition.kind = partition_kind_from_string(std::string(trim(v))); },
       [](const S& s) { return std::string(to_string(s.sim.partition.kind)); }},
      {"partition.shards_per_client",
       [](S& s, V v) { s.sim.partition.shards_per_client = parse_count<std::size_t>(v); },
       [](const S& s) { return std::to_string(s.sim.partition.shards_per_client); }},
      {"partition.beta", [](S& s, V v) { s.sim.partition.beta = parse_double(v); },
       [](const S& s) { return format_double(s.sim.partition.beta); }},
      {"noise.type", [](S& s, V v) { s.sim.noise.kind = noise_kind_from_string(std::string(trim(v))); },
       [](const S& s) { return std::string(to_string(s.sim.noise.kind)); }},
      {"noise.lo", [](S& s, V v) { s.sim.noise.lo = parse_double(v); },
       [](const S& s) { return format_double(s.sim.noise.lo); }},
      {"noise.hi", [](S& s, V v) { s.sim.noise.hi = parse_double(v); },
       [](const S& s) { return format_double(s.sim.noise.hi); }},
      {"noise.asymmetric_map",
       [](S& s, V v) {
         s.sim.noise.asymmetric_map =
             parse_list<int>(v, [](V p) { return static_cast<int>(parse_int(p)); });
       },
       [](const S& s) { return join(s.sim.noise.asymmetric_map); }},
      {"em.max_iters", [](S& s, V v) { s.sim.em.max_iters = static_cast<int>(parse_int(v)); },
       [](const S& s) { return std::to_string(s.sim.em.max_iters); }},
      {"em.rel_tol", [](S& s, V v) { s.sim.em.rel_tol = parse_double(v); },
       [](const S& s) { return format_double(s.sim.em.rel_tol); }},
      {"em.var_floor_scale", [](S& s, V v) { s.sim.em.var_floor_scale = parse_double(v); },
       [](const S& s) { return format_double(s.sim.em.var_floor_scale); }},
  };
  return table;
}

const Field* find_field(std::string_view key) {
  for (const auto& f : fields())
    if (key == f.key) return &f;
  return nullptr;
}

void apply(ExperimentSpec& spec, std::string_view key, std::string_view value, int line) {
  const Field* field = find_field(key);
  if (field == nullptr) throw SpecParseError(line, std::string(key), "unknown key");
  try {
    field->set(spec, value);
  } catch (const std::invalid_argument& e) {
    throw SpecParseError(line, std::string(key), e.what());
  } catch (const ConfigError& e) {
    throw SpecParseError(line, std::string(key), e.message());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

// Mean and population std of the defined entries.
std::pair<std::optional<double>, std::optional<double>> summarize(
    const std::vector<std::optional<double>>& values) {
  std::vector<double> defined;
  for (const auto& v : values)
    if (v) defined.push_back(*v);
  if (defined.empty()) return {std::nullopt, std::nullopt};
  return {mean(defined), population_stddev(defined)};
}

std::optional<double> final_accuracy(const SimulationResult& r) {
  if (r.rounds.empty()) return std::nullopt;
  return r.rounds.back().test_accuracy;
}

void prepare_output(const ExperimentSpec& spec, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "resolved.spec", render_experiment_spec(spec));
}

}  // namespace

ExperimentSpec parse_experiment_spec(std::istream& in) {
  ExperimentSpec spec;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view text = raw;
    if (auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw SpecParseError(line, "", "expected 'key = value'");
    const auto key = trim(text.substr(0, eq));
    const auto value = trim(text.substr(eq + 1));
    if (key.empty()) throw SpecParseError(line, "", "missing key");
    apply(spec, key, value, line);
  }
  return spec;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecParseError(0, "", "cannot open " + path.string());
  return parse_experiment_spec(in);
}

std::string render_experiment_spec(const ExperimentSpec& spec) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(spec) + "\n";
  return out;
}

void set_spec_value(ExperimentSpec& spec, const std::string& key, const std::string& value) {
  apply(spec, key, value, 0);
}

RunSummary run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir,
                          const RunOptions& options) {
  spec.validate();
  prepare_output(spec, out_dir);
  RunSummary summary;
  for (std::uint64_t seed : spec.seeds()) {
    SimulationConfig cfg = spec.sim;
    cfg.master_seed = seed;
    const SimulationResult result = run_simulation(cfg, options);
    const std::string stem = "metrics_seed" + std::to_string(seed);
    std::ostringstream csv, json;
    write_metrics_csv(result.rounds, csv);
    write_metrics_json(result.rounds, json);
    write_text(out_dir / (stem + ".csv"), csv.str());
    write_text(out_dir / (stem + ".json"), json.str());
    if (result.last_table) {
      std::ostringstream sim;
      write_matrix_csv(result.last_table->client_ids, result.last_table->similarity.normalized, sim);
      write_text(out_dir / ("similarity_seed" + std::to_string(seed) + ".csv"), sim.str());
    }
    summary.seeds.push_back(seed);
    summary.final_accuracy.push_back(final_accuracy(result));
  }

  std::string agg = "seed,final_test_accuracy\n";
  for (std::size_t i = 0; i < summary.seeds.size(); ++i)
    if (summary.final_accuracy[i])
      agg += std::to_string(summary.seeds[i]) + "," + format_double(*summary.final_accuracy[i]) + "\n";
  const auto [m, sd] = summarize(summary.final_accuracy);
  if (m) agg += "mean," + format_double(*m) + "\nstd," + format_double(*sd) + "\n";
  write_text(out_dir / "aggregate.csv", agg);
  return summary;
}

void compare_experiment(const ExperimentSpec& spec, const std::vector<std::string>& methods,
                        const std::filesystem::path& out_dir, const RunOptions& options) {
  if (methods.size() < 2) throw ConfigError("methods", "compare needs at least two methods");
  std::vector<ExperimentSpec> variants;
  for (const auto& name : methods) {
    ExperimentSpec v = spec;
    v.sim.method = method_from_string(name);
    v.validate();
    variants.push_back(std::move(v));
  }
  prepare_output(spec, out_dir);

  const auto seeds = spec.seeds();
  std::vector<std::vector<std::optional<double>>> columns(methods.size());
  for (std::uint64_t seed : seeds) {
    SimulationConfig base = spec.sim;
    base.master_seed = seed;
    const Scenario scenario = build_scenario(base);
    for (std::size_t j = 0; j < variants.size(); ++j) {
      SimulationConfig cfg = variants[j].sim;
      cfg.master_seed = seed;
      columns[j].push_back(final_accuracy(run_simulation(cfg, scenario, options)));
    }
  }

  std::string csv = "seed";
  for (const auto& name : methods) csv += "," + name;
  csv += "\n";
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    csv += std::to_string(seeds[i]);
    for (const auto& col : columns) csv += "," + format_optional(col[i]);
    csv += "\n";
  }
  csv += "mean";
  for (const auto& col : columns) csv += "," + format_optional(summarize(col).first);
  csv += "\n";
  write_text(out_dir / "compare.csv", csv);
}

void sweep_experiment(const ExperimentSpec& spec, const std::string& parameter,
                      const std::vector<std::string>& values, const std::filesystem::path& out_dir,
                      const RunOptions& options) {
  if (std::find(kSweepParameters.begin(), kSweepParameters.end(), parameter) ==
      kSweepParameters.end())
    throw ConfigError("param", "cannot sweep '" + parameter + "'");
  if (values.empty()) throw ConfigError("values", "sweep needs at least one value");
  std::vector<ExperimentSpec> variants;
  for (const auto& value : values) {
    ExperimentSpec v = spec;
    set_spec_value(v, parameter, value);
    v.validate();
    variants.push_back(std::move(v));
  }
  prepare_output(spec, out_dir);

  const auto seeds = spec.seeds();
  std::string csv = parameter;
  for (auto seed : seeds) csv += ",seed_" + std::to_string(seed);
  csv += ",mean,std\n";
  std::vector<Scenario> scenarios;
  for (std::uint64_t seed : seeds) {
    SimulationConfig base = spec.sim;
    base.master_seed = seed;
    scenarios.push_back(build_scenario(base));
  }
  for (std::size_t j = 0; j < variants.size(); ++j) {
    std::vector<std::optional<double>> finals;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      SimulationConfig cfg = variants[j].sim;
      cfg.master_seed = seeds[i];
      finals.push_back(final_accuracy(run_simulation(cfg, scenarios[i], options)));
    }
    csv += std::string(trim(values[j]));
    for (const auto& f : finals) csv += "," + format_optional(f);
    const auto [m, sd] = summarize(finals);
    csv += "," + format_optional(m) + "," + format_optional(sd) + "\n";
  }
  write_text(out_dir / "sweep.csv", csv);
}

}  // namespace fedrn
