// Command-line front end: run, compare and sweep experiments described by a
// flat key = value spec file.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedrn/errors.hpp"
#include "fedrn/experiment.hpp"
#include "fedrn/text.hpp"

namespace {

enum ExitCode { kOk = 0, kParseError = 2, kInvariantViolation = 3, kRuntimeFailure = 4 };

unsigned threads_from_env() {
  const char* raw = std::getenv("FEDRN_THREADS");
  if (raw == nullptr) return 1;
  try {
    const long long n = fedrn::parse_int(raw);
    return n > 0 ? static_cast<unsigned>(n) : 1;
  } catch (const std::exception&) {
    return 1;
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  for (auto part : fedrn::split(text, ',')) {
    auto t = fedrn::trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning under label noise: experiment runner"};
  app.require_subcommand(1);

  std::string spec_path, out_dir = "out", method, methods, param, values;
  long long seed = -1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--spec", spec_path, "Experiment spec file")->required();
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--seed", seed, "Override the seed in the spec file");
    sub->add_option("--method", method, "Override the method in the spec file");
  };
  auto* run = app.add_subcommand("run", "Run one method for every seed");
  add_common(run);
  auto* compare = app.add_subcommand("compare", "Run several methods on identical scenarios");
  add_common(compare);
  compare->add_option("--methods", methods, "Comma-separated method list")->required();
  auto* sweep = app.add_subcommand("sweep", "Vary one parameter over a list of values");
  add_common(sweep);
  sweep->add_option("--param", param, "alpha | k | participation_rate | keep_fraction")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kParseError;
  }

  fedrn::ExperimentSpec spec;
  try {
    spec = fedrn::load_experiment_spec(spec_path);
    if (seed >= 0) fedrn::set_spec_value(spec, "seed", std::to_string(seed));
    if (!method.empty()) fedrn::set_spec_value(spec, "method", method);
  } catch (const fedrn::SpecParseError& e) {
    std::cerr << "spec error: " << e.what() << '\n';
    return kParseError;
  }

  const fedrn::RunOptions options{threads_from_env()};
  try {
    if (run->parsed()) {
      const auto summary = fedrn::run_experiment(spec, out_dir, options);
      for (std::size_t i = 0; i < summary.seeds.size(); ++i) {
        std::cout << "seed " << summary.seeds[i] << ": final test accuracy ";
        if (summary.final_accuracy[i])
          std::cout << fedrn::format_double(*summary.final_accuracy[i]) << '\n';
        else
          std::cout << "n/a\n";
      }
    } else if (compare->parsed()) {
      fedrn::compare_experiment(spec, split_list(methods), out_dir, options);
      std::cout << "wrote " << (std::filesystem::path(out_dir) / "compare.csv").string() << '\n';
    } else if (sweep->parsed()) {
      fedrn::sweep_experiment(spec, param, split_list(values), out_dir, options);
      std::cout << "wrote " << (std::filesystem::path(out_dir) / "sweep.csv").string() << '\n';
    }
  } catch (const fedrn::SpecParseError& e) {
    std::cerr << "spec error: " << e.what() << '\n';
    return kParseError;
  } catch (const fedrn::ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kInvariantViolation;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kOk;
}
