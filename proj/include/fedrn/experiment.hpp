#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedrn/federation.hpp"

namespace fedrn {

/// A simulation configuration plus how many seeds to repeat it for. Seeds
/// are master_seed, master_seed + 1, ...
struct ExperimentSpec {
  SimulationConfig sim;
  int repeat = 1;

  std::vector<std::uint64_t> seeds() const;
  void validate() const;
};

/// Malformed experiment file: unknown key, bad syntax or an unparseable value.
class SpecParseError : public std::runtime_error {
 public:
  SpecParseError(int line, std::string field, const std::string& message);

  int line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  int line_;
  std::string field_;
};

/// Flat `key = value` lines; `#` starts a comment; keys use dotted section
/// prefixes such as `train.learning_rate`. Unlisted keys keep their defaults.
ExperimentSpec parse_experiment_spec(std::istream& in);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

/// Every key with its resolved value, in a stable order; parses back to an
/// equivalent spec.
std::string render_experiment_spec(const ExperimentSpec& spec);

/// Sets one key as if it appeared in a spec file.
void set_spec_value(ExperimentSpec& spec, const std::string& key, const std::string& value);

struct RunSummary {
  std::vector<std::uint64_t> seeds;
  std::vector<std::optional<double>> final_accuracy;  // absent when rounds == 0
};

/// Writes metrics_seed<S>.csv/.json per seed, aggregate.csv and
/// resolved.spec into `out_dir`.
RunSummary run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir,
                          const RunOptions& options = {});

/// Runs each method on identical scenarios; writes compare.csv with one
/// final-accuracy column per method.
void compare_experiment(const ExperimentSpec& spec, const std::vector<std::string>& methods,
                        const std::filesystem::path& out_dir, const RunOptions& options = {});

inline const std::vector<std::string> kSweepParameters = {"alpha", "k", "participation_rate",
                                                          "keep_fraction"};

/// One run set per value; writes sweep.csv keyed by value.
void sweep_experiment(const ExperimentSpec& spec, const std::string& parameter,
                      const std::vector<std::string>& values, const std::filesystem::path& out_dir,
                      const RunOptions& options = {});

}  // namespace fedrn
