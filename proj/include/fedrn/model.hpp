#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedrn/example.hpp"

namespace fedrn {

enum class Activation { kIdentity, kRelu, kTanh };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Fully connected layer, y = act(W x + b). Weights are row-major out x in.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  Activation activation = Activation::kIdentity;

  std::size_t parameter_count() const { return weights.size() + bias.size(); }
  bool operator==(const DenseLayer&) const = default;
};

/// Feed-forward classifier: a stack of feature layers followed by a linear
/// classification head producing logits over num_classes.
struct ModelParams {
  std::vector<DenseLayer> feature_layers;
  DenseLayer head;
  std::size_t num_classes = 0;

  std::size_t input_dim() const;
  std::size_t feature_dim() const;
  std::size_t parameter_count() const;
  bool same_architecture(const ModelParams& other) const;

  /// Throws ContractViolation if shapes are inconsistent or any value is
  /// non-finite.
  void validate() const;

  /// All scalars in a fixed order: each feature layer's weights then bias,
  /// then the head's weights then bias.
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> values);

  bool operator==(const ModelParams&) const = default;
};

struct ModelShape {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden = {32, 32};
  std::size_t num_classes = 2;
  Activation activation = Activation::kRelu;
};

/// He-style uniform initialisation drawn from the given stream.
ModelParams init_model(const ModelShape& shape, std::uint64_t rng_stream);
ModelParams zero_model(const ModelShape& shape);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.5;
  int local_epochs = 5;
  int batch_size = 32;
  std::uint64_t rng_stream = 0;

  void validate() const;
};

struct Prediction {
  std::vector<double> probs;
};

/// Smallest probability fed to the log in the cross-entropy.
inline constexpr double kProbabilityFloor = 1e-12;

Prediction forward(const ModelParams& model, std::span<const double> features);

/// Cross-entropy of each example against its observed label.
std::vector<double> per_example_losses(const ModelParams& model,
                                       std::span<const LabeledExample> examples);

double mean_loss(const ModelParams& model, std::span<const LabeledExample> examples);

/// Analytic gradient of the mean cross-entropy, shaped like the model.
ModelParams mean_loss_gradient(const ModelParams& model,
                               std::span<const LabeledExample> examples);

/// Mini-batch SGD with classical momentum on mean cross-entropy. The input
/// model is left untouched. Throws NoTrainingData for an empty sequence.
ModelParams sgd_train(const ModelParams& model, std::span<const LabeledExample> examples,
                      const TrainConfig& cfg);

/// Fraction of examples whose argmax prediction equals the observed label.
double training_accuracy(const ModelParams& model, std::span<const LabeledExample> examples);

std::size_t argmax(std::span<const double> values);

struct FineTuneResult {
  ModelParams model;
  bool skipped = false;
};

/// Same procedure as sgd_train restricted to the head. The feature layers of
/// the result are bitwise copies of the input's. An empty example sequence
/// returns the model unchanged with `skipped` set.
FineTuneResult fine_tune_head(const ModelParams& model, std::span<const LabeledExample> examples,
                              const TrainConfig& cfg);

/// Weighted sum of identically shaped models. Weights must be nonnegative
/// and sum to one within 1e-9.
ModelParams average_params(std::span<const ModelParams> models, std::span<const double> weights);

/// Text checkpoint: a shape header per layer followed by one scalar per line.
void write_checkpoint(const ModelParams& model, std::ostream& out);
ModelParams read_checkpoint(std::istream& in);

}  // namespace fedrn
