#include "fedrn/model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <type_traits>

#include "fedrn/errors.hpp"
#include "fedrn/random.hpp"
#include "fedrn/text.hpp"

namespace fedrn {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("activation", "unknown activation '" + name + "'");
}

namespace {

double activate(Activation a, double z) {
  switch (a) {
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kTanh: return std::tanh(z);
    case Activation::kIdentity: break;
  }
  return z;
}

// Derivative expressed through pre-activation z and post-activation y.
double activate_grad(Activation a, double z, double y) {
  switch (a) {
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: return 1.0 - y * y;
    case Activation::kIdentity: break;
  }
  return 1.0;
}

void affine(const DenseLayer& layer, std::span<const double> x, std::vector<double>& z) {
  z.assign(layer.bias.begin(), layer.bias.end());
  for (std::size_t o = 0; o < layer.out; ++o) {
    const double* row = layer.weights.data() + o * layer.in;
    double acc = z[o];
    for (std::size_t i = 0; i < layer.in; ++i) acc += row[i] * x[i];
    z[o] = acc;
  }
}

void softmax_inplace(std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

void check_input(const ModelParams& model, std::span<const double> features) {
  if (features.size() != model.input_dim())
    throw ContractViolation("feature length " + std::to_string(features.size()) +
                            " does not match model input dim " +
                            std::to_string(model.input_dim()));
}

void check_label(const ModelParams& model, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= model.num_classes)
    throw ContractViolation("label " + std::to_string(label) + " outside [0, " +
                            std::to_string(model.num_classes) + ")");
}

// Forward pass keeping every intermediate needed by backprop.
struct Trace {
  std::vector<std::vector<double>> pre;   // pre-activations per feature layer
  std::vector<std::vector<double>> post;  // post-activations per feature layer
  std::vector<double> probs;
};

void run_forward(const ModelParams& model, std::span<const double> x, Trace& t) {
  const std::size_t depth = model.feature_layers.size();
  t.pre.resize(depth);
  t.post.resize(depth);
  std::span<const double> current = x;
  for (std::size_t l = 0; l < depth; ++l) {
    const DenseLayer& layer = model.feature_layers[l];
    affine(layer, current, t.pre[l]);
    t.post[l].resize(layer.out);
    for (std::size_t o = 0; o < layer.out; ++o)
      t.post[l][o] = activate(layer.activation, t.pre[l][o]);
    current = t.post[l];
  }
  affine(model.head, current, t.probs);
  softmax_inplace(t.probs);
}

// Adds the cross-entropy gradient of a single example into `grad`.
void accumulate_gradient(const ModelParams& model, std::span<const double> x, int label,
                         Trace& t, std::vector<double>& delta, std::vector<double>& next,
                         ModelParams& grad) {
  run_forward(model, x, t);
  const std::size_t depth = model.feature_layers.size();

  delta.assign(t.probs.begin(), t.probs.end());
  delta[static_cast<std::size_t>(label)] -= 1.0;

  auto backprop_layer = [&](const DenseLayer& layer, DenseLayer& g, std::span<const double> input,
                            bool need_input_delta) {
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double d = delta[o];
      g.bias[o] += d;
      double* grow = g.weights.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) grow[i] += d * input[i];
    }
    if (!need_input_delta) return;
    next.assign(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double d = delta[o];
      const double* row = layer.weights.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) next[i] += row[i] * d;
    }
    delta.swap(next);
  };

  std::span<const double> head_input = depth == 0 ? x : std::span<const double>(t.post[depth - 1]);
  backprop_layer(model.head, grad.head, head_input, depth > 0);
  for (std::size_t l = depth; l-- > 0;) {
    const DenseLayer& layer = model.feature_layers[l];
    for (std::size_t o = 0; o < layer.out; ++o)
      delta[o] *= activate_grad(layer.activation, t.pre[l][o], t.post[l][o]);
    std::span<const double> input = l == 0 ? x : std::span<const double>(t.post[l - 1]);
    backprop_layer(layer, grad.feature_layers[l], input, l > 0);
  }
}

ModelParams zeros_like(const ModelParams& m) {
  ModelParams z = m;
  for (auto& layer : z.feature_layers) {
    std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  std::fill(z.head.weights.begin(), z.head.weights.end(), 0.0);
  std::fill(z.head.bias.begin(), z.head.bias.end(), 0.0);
  return z;
}

template <class Model>
auto buffers(Model& m) {
  using Buffer = std::conditional_t<std::is_const_v<Model>, const std::vector<double>, std::vector<double>>;
  std::vector<Buffer*> out;
  for (auto& layer : m.feature_layers) {
    out.push_back(&layer.weights);
    out.push_back(&layer.bias);
  }
  out.push_back(&m.head.weights);
  out.push_back(&m.head.bias);
  return out;
}

struct Row {
  std::span<const double> x;
  int label;
};

// Mini-batch SGD with classical momentum over prepared rows.
ModelParams train_rows(const ModelParams& model, const std::vector<Row>& rows,
                       const TrainConfig& cfg) {
  ModelParams params = model;
  ModelParams velocity = zeros_like(model);
  ModelParams grad = zeros_like(model);
  auto pbufs = buffers(params);
  auto vbufs = buffers(velocity);
  auto gbufs = buffers(grad);

  Rng rng = make_rng(cfg.rng_stream);
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  Trace trace;
  std::vector<double> delta, next;
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      for (auto* g : gbufs) std::fill(g->begin(), g->end(), 0.0);
      for (std::size_t i = start; i < stop; ++i) {
        const Row& row = rows[order[i]];
        accumulate_gradient(params, row.x, row.label, trace, delta, next, grad);
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t b = 0; b < pbufs.size(); ++b) {
        auto& p = *pbufs[b];
        auto& v = *vbufs[b];
        const auto& g = *gbufs[b];
        for (std::size_t j = 0; j < p.size(); ++j) {
          v[j] = cfg.momentum * v[j] - cfg.learning_rate * (g[j] * scale);
          p[j] += v[j];
        }
      }
    }
  }
  return params;
}

std::vector<Row> observed_rows(const ModelParams& model, std::span<const LabeledExample> examples) {
  std::vector<Row> rows;
  rows.reserve(examples.size());
  for (const auto& ex : examples) {
    check_input(model, ex.features());
    check_label(model, ex.observed_label());
    rows.push_back({ex.features(), ex.observed_label()});
  }
  return rows;
}

DenseLayer make_layer(std::size_t in, std::size_t out, Activation act) {
  DenseLayer layer;
  layer.in = in;
  layer.out = out;
  layer.weights.assign(in * out, 0.0);
  layer.bias.assign(out, 0.0);
  layer.activation = act;
  return layer;
}

}  // namespace

std::size_t ModelParams::input_dim() const {
  return feature_layers.empty() ? head.in : feature_layers.front().in;
}

std::size_t ModelParams::feature_dim() const { return head.in; }

std::size_t ModelParams::parameter_count() const {
  std::size_t n = head.parameter_count();
  for (const auto& layer : feature_layers) n += layer.parameter_count();
  return n;
}

bool ModelParams::same_architecture(const ModelParams& other) const {
  if (num_classes != other.num_classes || feature_layers.size() != other.feature_layers.size())
    return false;
  auto same = [](const DenseLayer& a, const DenseLayer& b) {
    return a.in == b.in && a.out == b.out && a.activation == b.activation &&
           a.weights.size() == b.weights.size() && a.bias.size() == b.bias.size();
  };
  for (std::size_t l = 0; l < feature_layers.size(); ++l)
    if (!same(feature_layers[l], other.feature_layers[l])) return false;
  return same(head, other.head);
}

void ModelParams::validate() const {
  auto check_layer = [](const DenseLayer& layer, const char* what) {
    if (layer.in == 0 || layer.out == 0)
      throw ContractViolation(std::string(what) + ": zero-sized layer");
    if (layer.weights.size() != layer.in * layer.out || layer.bias.size() != layer.out)
      throw ContractViolation(std::string(what) + ": buffer sizes disagree with shape");
    for (double v : layer.weights)
      if (!std::isfinite(v)) throw ContractViolation(std::string(what) + ": non-finite weight");
    for (double v : layer.bias)
      if (!std::isfinite(v)) throw ContractViolation(std::string(what) + ": non-finite bias");
  };
  std::size_t expected_in = input_dim();
  for (const auto& layer : feature_layers) {
    check_layer(layer, "feature layer");
    if (layer.in != expected_in) throw ContractViolation("incompatible consecutive layer dims");
    expected_in = layer.out;
  }
  check_layer(head, "head");
  if (head.in != expected_in) throw ContractViolation("head input dim mismatch");
  if (num_classes == 0 || head.out != num_classes)
    throw ContractViolation("head output dim must equal num_classes");
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  auto append = [&](const DenseLayer& layer) {
    out.insert(out.end(), layer.weights.begin(), layer.weights.end());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
  };
  for (const auto& layer : feature_layers) append(layer);
  append(head);
  return out;
}

void ModelParams::assign_flat(std::span<const double> values) {
  if (values.size() != parameter_count())
    throw ContractViolation("assign_flat: wrong number of values");
  std::size_t pos = 0;
  for (auto* buf : buffers(*this)) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), buf->size(), buf->begin());
    pos += buf->size();
  }
}

ModelParams zero_model(const ModelShape& shape) {
  if (shape.input_dim == 0 || shape.num_classes == 0)
    throw ContractViolation("model shape needs positive input dim and class count");
  ModelParams m;
  m.num_classes = shape.num_classes;
  std::size_t in = shape.input_dim;
  for (std::size_t width : shape.hidden) {
    if (width == 0) throw ContractViolation("hidden width must be positive");
    m.feature_layers.push_back(make_layer(in, width, shape.activation));
    in = width;
  }
  m.head = make_layer(in, shape.num_classes, Activation::kIdentity);
  return m;
}

ModelParams init_model(const ModelShape& shape, std::uint64_t rng_stream) {
  ModelParams m = zero_model(shape);
  Rng rng = make_rng(rng_stream);
  auto fill = [&](DenseLayer& layer) {
    const double fan_in = static_cast<double>(layer.in);
    const double limit = layer.activation == Activation::kRelu
                             ? std::sqrt(6.0 / fan_in)
                             : std::sqrt(6.0 / (fan_in + static_cast<double>(layer.out)));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : layer.weights) w = dist(rng);
  };
  for (auto& layer : m.feature_layers) fill(layer);
  fill(m.head);
  return m;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("train.learning_rate", "must be a finite nonnegative number");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw ConfigError("train.momentum", "must lie in [0, 1)");
  if (local_epochs < 0) throw ConfigError("train.local_epochs", "must be nonnegative");
  if (batch_size < 1) throw ConfigError("train.batch_size", "must be at least 1");
}

Prediction forward(const ModelParams& model, std::span<const double> features) {
  check_input(model, features);
  Trace t;
  run_forward(model, features, t);
  return Prediction{std::move(t.probs)};
}

std::vector<double> per_example_losses(const ModelParams& model,
                                       std::span<const LabeledExample> examples) {
  if (examples.empty()) throw ContractViolation("per_example_losses: no examples");
  std::vector<double> losses;
  losses.reserve(examples.size());
  Trace t;
  for (const auto& ex : examples) {
    const int label = ex.observed_label();
    check_label(model, label);
    check_input(model, ex.features());
    run_forward(model, ex.features(), t);
    losses.push_back(-std::log(std::max(t.probs[static_cast<std::size_t>(label)], kProbabilityFloor)));
  }
  return losses;
}

double mean_loss(const ModelParams& model, std::span<const LabeledExample> examples) {
  const auto losses = per_example_losses(model, examples);
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

ModelParams mean_loss_gradient(const ModelParams& model,
                               std::span<const LabeledExample> examples) {
  if (examples.empty()) throw ContractViolation("mean_loss_gradient: no examples");
  ModelParams grad = zeros_like(model);
  Trace t;
  std::vector<double> delta, next;
  for (const auto& row : observed_rows(model, examples))
    accumulate_gradient(model, row.x, row.label, t, delta, next, grad);
  const double scale = 1.0 / static_cast<double>(examples.size());
  for (auto* buf : buffers(grad))
    for (double& v : *buf) v *= scale;
  return grad;
}

ModelParams sgd_train(const ModelParams& model, std::span<const LabeledExample> examples,
                      const TrainConfig& cfg) {
  if (examples.empty()) throw NoTrainingData();
  cfg.validate();
  return train_rows(model, observed_rows(model, examples), cfg);
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

double training_accuracy(const ModelParams& model, std::span<const LabeledExample> examples) {
  if (examples.empty()) throw ContractViolation("training_accuracy: no examples");
  std::size_t hits = 0;
  Trace t;
  for (const auto& ex : examples) {
    check_input(model, ex.features());
    run_forward(model, ex.features(), t);
    if (static_cast<int>(argmax(t.probs)) == ex.observed_label()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

FineTuneResult fine_tune_head(const ModelParams& model, std::span<const LabeledExample> examples,
                              const TrainConfig& cfg) {
  if (examples.empty()) return {model, true};
  cfg.validate();

  // Frozen feature extraction, then plain SGD on a head-only model.
  std::vector<std::vector<double>> features;
  features.reserve(examples.size());
  Trace t;
  for (const auto& ex : examples) {
    check_input(model, ex.features());
    check_label(model, ex.observed_label());
    run_forward(model, ex.features(), t);
    features.push_back(model.feature_layers.empty() ? ex.features() : t.post.back());
  }
  std::vector<Row> rows;
  rows.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i)
    rows.push_back({features[i], examples[i].observed_label()});

  ModelParams head_only;
  head_only.head = model.head;
  head_only.num_classes = model.num_classes;
  ModelParams trained = train_rows(head_only, rows, cfg);

  FineTuneResult result{model, false};
  result.model.head = std::move(trained.head);
  return result;
}

ModelParams average_params(std::span<const ModelParams> models, std::span<const double> weights) {
  if (models.empty()) throw ContractViolation("average_params: no models");
  if (models.size() != weights.size())
    throw ContractViolation("average_params: weight count does not match model count");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ContractViolation("average_params: weights must be finite and nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ContractViolation("average_params: weights must sum to 1");
  for (const auto& m : models)
    if (!m.same_architecture(models.front()))
      throw ContractViolation("average_params: architecture mismatch");

  // Anchored at the first model: out = m0 + sum_i w_i (m_i - m0). Equal to
  // sum_i w_i m_i when the weights sum to one, and exact for identical inputs.
  ModelParams out = models.front();
  auto obufs = buffers(out);
  for (std::size_t i = 1; i < models.size(); ++i) {
    if (weights[i] == 0.0) continue;
    const auto sbufs = buffers(models[i]);
    const auto abufs = buffers(models.front());
    for (std::size_t b = 0; b < obufs.size(); ++b) {
      auto& o = *obufs[b];
      const auto& s = *sbufs[b];
      const auto& a = *abufs[b];
      for (std::size_t j = 0; j < o.size(); ++j) o[j] += weights[i] * (s[j] - a[j]);
    }
  }
  return out;
}

void write_checkpoint(const ModelParams& model, std::ostream& out) {
  out << "fedrn-model " << model.feature_layers.size() << ' ' << model.num_classes << '\n';
  auto write_layer = [&](const DenseLayer& layer, const char* tag) {
    out << tag << ' ' << layer.in << ' ' << layer.out << ' ' << to_string(layer.activation) << '\n';
    for (double v : layer.weights) out << format_double(v) << '\n';
    for (double v : layer.bias) out << format_double(v) << '\n';
  };
  for (const auto& layer : model.feature_layers) write_layer(layer, "layer");
  write_layer(model.head, "head");
}

ModelParams read_checkpoint(std::istream& in) {
  std::string magic;
  std::size_t depth = 0;
  ModelParams m;
  if (!(in >> magic >> depth >> m.num_classes) || magic != "fedrn-model")
    throw ContractViolation("checkpoint: bad header");
  auto read_layer = [&](const char* expected_tag) {
    std::string tag, act;
    DenseLayer layer;
    if (!(in >> tag >> layer.in >> layer.out >> act) || tag != expected_tag)
      throw ContractViolation(std::string("checkpoint: expected ") + expected_tag + " header");
    layer.activation = activation_from_string(act);
    layer.weights.resize(layer.in * layer.out);
    layer.bias.resize(layer.out);
    std::string token;
    for (auto* buf : {&layer.weights, &layer.bias})
      for (double& v : *buf) {
        if (!(in >> token)) throw ContractViolation("checkpoint: truncated");
        v = parse_double(token);
      }
    return layer;
  };
  for (std::size_t l = 0; l < depth; ++l) m.feature_layers.push_back(read_layer("layer"));
  m.head = read_layer("head");
  m.validate();
  return m;
}

}  // namespace fedrn
