#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace fedrn {

namespace audit {

// Per-thread counter of reads of example contents. Null when no audit is
// running on this thread.
inline thread_local std::uint64_t* active_counter = nullptr;

inline void touch() noexcept {
  if (active_counter != nullptr) ++*active_counter;
}

/// Counts every read of example features or labels performed on the current
/// thread while the scope is alive. Scopes nest; the innermost one counts.
class DataAccessScope {
 public:
  DataAccessScope() : previous_(active_counter) { active_counter = &count_; }
  ~DataAccessScope() { active_counter = previous_; }
  DataAccessScope(const DataAccessScope&) = delete;
  DataAccessScope& operator=(const DataAccessScope&) = delete;

  std::uint64_t count() const noexcept { return count_; }

 private:
  std::uint64_t count_ = 0;
  std::uint64_t* previous_;
};

}  // namespace audit

/// A feature vector with its hidden ground-truth label and the label the
/// client actually observed. The true label is fixed at construction.
class LabeledExample {
 public:
  LabeledExample(std::vector<double> features, int true_label, int observed_label)
      : features_(std::move(features)), true_label_(true_label), observed_label_(observed_label) {}

  const std::vector<double>& features() const noexcept {
    audit::touch();
    return features_;
  }
  int observed_label() const noexcept {
    audit::touch();
    return observed_label_;
  }
  // Only metrics and the oracle baseline may look at this.
  int true_label() const noexcept {
    audit::touch();
    return true_label_;
  }
  bool is_clean() const noexcept { return observed_label() == true_label(); }

  void set_observed_label(int label) noexcept { observed_label_ = label; }

  bool operator==(const LabeledExample&) const = default;

 private:
  std::vector<double> features_;
  int true_label_;
  int observed_label_;
};

}  // namespace fedrn
