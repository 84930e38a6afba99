#include "illcond/models/autoencoder.hpp"

#include <cmath>
#include <random>

#include "illcond/errors.hpp"

namespace illcond::models {

using diffcore::Shape;

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::size_t AutoencoderModel::latent_dim() const { return effective_out(latent_index - 1); }

std::size_t AutoencoderModel::effective_out(std::size_t i) const {
  const std::size_t out = layers.at(i).out();
  return (variational && i + 1 == latent_index) ? out / 2 : out;
}

void AutoencoderModel::validate() const {
  if (layers.size() < 2) throw ValidationError("model needs at least two layers");
  if (latent_index < 1 || latent_index >= layers.size()) {
    throw ValidationError("latent_index " + std::to_string(latent_index) + " outside [1, " +
                          std::to_string(layers.size() - 1) + "]");
  }
  if (beta < 0.0 || !std::isfinite(beta)) throw ValidationError("beta must be finite and >= 0");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (l.weight.rank() != 2) throw ValidationError("layer " + std::to_string(i) + ": weight is not a matrix");
    if (l.bias.rank() != 1 || l.bias.size() != l.out()) {
      throw ValidationError("layer " + std::to_string(i) + ": bias length " + std::to_string(l.bias.size()) +
                            " does not match " + std::to_string(l.out()) + " weight rows");
    }
  }
  if (variational) {
    const LayerSpec& head = layers[latent_index - 1];
    if (head.out() % 2 != 0) throw ValidationError("variational encoder head must have even width");
    if (head.activation != Activation::identity) {
      throw ValidationError("variational encoder head must use the identity activation");
    }
  }
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (effective_out(i) != layers[i + 1].in()) {
      throw ValidationError("layer " + std::to_string(i) + " emits " + std::to_string(effective_out(i)) +
                            " values but layer " + std::to_string(i + 1) + " expects " +
                            std::to_string(layers[i + 1].in()));
    }
  }
  if (layers.back().out() != input_dim()) {
    throw ValidationError("reconstruction width " + std::to_string(layers.back().out()) +
                          " differs from input width " + std::to_string(input_dim()));
  }
  // n == d is admitted so identity and other square models remain expressible.
  if (latent_dim() > input_dim()) {
    throw ValidationError("latent width " + std::to_string(latent_dim()) + " exceeds input width " +
                          std::to_string(input_dim()));
  }
}

FrozenModel::FrozenModel(const AutoencoderModel& model) : latent_index_(model.latent_index) {
  model.validate();
  layers_.reserve(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& l = model.layers[i];
    Tensor w = l.weight;
    Tensor b = l.bias;
    if (model.variational && i + 1 == model.latent_index) {
      const std::size_t n = l.out() / 2;
      w = l.weight.row_range(0, n);
      b = Tensor::vector(std::vector<double>(l.bias.values().begin(),
                                             l.bias.values().begin() + static_cast<std::ptrdiff_t>(n)));
    }
    Tensor wt = w.transposed();
    layers_.push_back(Layer{std::move(w), std::move(wt), std::move(b), l.activation});
  }
}

Var apply_activation(Activation a, Var pre) {
  switch (a) {
    case Activation::relu: return diffcore::relu(pre);
    case Activation::tanh: return diffcore::tanh(pre);
    case Activation::sigmoid: return diffcore::sigmoid(pre);
    case Activation::identity: return pre;
  }
  return pre;
}

Var apply_layer(Graph& g, const FrozenModel::Layer& layer, Var h) {
  Var pre = diffcore::matmul(h, g.constant(layer.weight_t)) + g.constant(layer.bias);
  return apply_activation(layer.activation, pre);
}

std::vector<Var> forward_layers(Graph& g, const FrozenModel& model, Var h, std::size_t first,
                                std::size_t last) {
  std::vector<Var> outs;
  outs.reserve(last - first);
  for (std::size_t i = first; i < last; ++i) {
    h = apply_layer(g, model.layers()[i], h);
    outs.push_back(h);
  }
  return outs;
}

namespace {

void check_width(const Tensor& x, std::size_t width, const char* what) {
  if (x.rank() < 1 || x.rank() > 2 || x.cols() != width) {
    throw ShapeError(std::string(what) + ": expected width " + std::to_string(width) + ", got shape " +
                     diffcore::shape_string(x.shape()));
  }
}

}  // namespace

SplitActivations forward_full(const AutoencoderModel& model, const Tensor& x) {
  FrozenModel frozen(model);
  check_width(x, frozen.input_dim(), "forward_full");
  Graph g;
  auto outs = forward_layers(g, frozen, g.constant(x), 0, frozen.layers().size());
  SplitActivations result;
  for (Var v : outs) result.layers.push_back(g.evaluate(v));
  return result;
}

Tensor encode(const AutoencoderModel& model, const Tensor& x) {
  FrozenModel frozen(model);
  check_width(x, frozen.input_dim(), "encode");
  Graph g;
  auto outs = forward_layers(g, frozen, g.constant(x), 0, frozen.latent_index());
  return g.evaluate(outs.back());
}

Tensor decode(const AutoencoderModel& model, const Tensor& z) {
  FrozenModel frozen(model);
  check_width(z, frozen.latent_dim(), "decode");
  Graph g;
  auto outs = forward_layers(g, frozen, g.constant(z), frozen.latent_index(), frozen.layers().size());
  return g.evaluate(outs.back());
}

Tensor reconstruct(const AutoencoderModel& model, const Tensor& x) {
  return forward_full(model, x).output();
}

Topology default_topology() {
  using A = Activation;
  return Topology{{256, 128, 32, 8, 32, 128, 256},
                  {A::relu, A::relu, A::identity, A::relu, A::relu, A::sigmoid},
                  3,
                  false,
                  0.0};
}

AutoencoderModel make_autoencoder(const Topology& t, std::uint64_t seed) {
  if (t.widths.size() != t.activations.size() + 1) {
    throw ConfigError("topology needs one more width than activations");
  }
  std::mt19937_64 rng(seed);
  AutoencoderModel m;
  m.latent_index = t.latent_index;
  m.variational = t.variational;
  m.beta = t.beta;
  for (std::size_t i = 0; i < t.activations.size(); ++i) {
    const std::size_t in = t.widths[i];
    std::size_t out = t.widths[i + 1];
    if (t.variational && i + 1 == t.latent_index) out *= 2;
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> w(out * in);
    for (double& v : w) v = dist(rng);
    m.layers.push_back(LayerSpec{Tensor::matrix(out, in, std::move(w)), Tensor::zeros(Shape{out}),
                                 t.activations[i]});
  }
  m.validate();
  return m;
}

}  // namespace illcond::models
