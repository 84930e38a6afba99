#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "illcond/diffcore/graph.hpp"
#include "illcond/diffcore/tensor.hpp"

namespace illcond::models {

using diffcore::Graph;
using diffcore::Tensor;
using diffcore::Var;

enum class Activation { relu, tanh, sigmoid, identity };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

/// One dense layer y = act(W x + b), W stored [out, in].
struct LayerSpec {
  Tensor weight;
  Tensor bias;
  Activation activation = Activation::identity;

  std::size_t in() const { return weight.cols(); }
  std::size_t out() const { return weight.rows(); }
};

/// Layer stack f_n o ... o f_1 with the encoder made of the first
/// `latent_index` layers.
///
/// For a variational model the last encoder layer emits [mu || log sigma^2]
/// (width 2n) and the decoder consumes an n-dimensional latent. Everything
/// outside training reads the mu half only.
struct AutoencoderModel {
  std::vector<LayerSpec> layers;
  std::size_t latent_index = 1;
  bool variational = false;
  double beta = 0.0;

  std::size_t input_dim() const { return layers.front().in(); }
  std::size_t latent_dim() const;
  std::size_t layer_count() const { return layers.size(); }

  /// Output width of layer i as seen by the rest of the network (the mu
  /// width for a variational encoder head).
  std::size_t effective_out(std::size_t i) const;

  /// Throws ValidationError describing the first broken invariant.
  void validate() const;
};

/// Post-activation output of every layer for a batch; entry k is the output
/// of layer k (0-based), so the last entry is the reconstruction.
struct SplitActivations {
  std::vector<Tensor> layers;

  const Tensor& output() const { return layers.back(); }
  std::size_t split_count() const { return layers.size() - 1; }
};

/// Graph-ready view of a model: transposed weights, mu-only encoder head.
class FrozenModel {
 public:
  explicit FrozenModel(const AutoencoderModel& model);

  struct Layer {
    Tensor weight;    // [out, in]
    Tensor weight_t;  // [in, out]
    Tensor bias;      // [out]
    Activation activation;
  };

  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t latent_index() const { return latent_index_; }
  std::size_t input_dim() const { return layers_.front().weight.cols(); }
  std::size_t latent_dim() const { return layers_[latent_index_ - 1].weight.rows(); }

 private:
  std::vector<Layer> layers_;
  std::size_t latent_index_;
};

/// Apply one layer to a [B, in] or [in] node.
Var apply_layer(Graph& g, const FrozenModel::Layer& layer, Var h);

/// Apply activation `a` to a pre-activation node.
Var apply_activation(Activation a, Var pre);

/// Apply layers [first, last) and return each post-activation node.
std::vector<Var> forward_layers(Graph& g, const FrozenModel& model, Var h, std::size_t first,
                                std::size_t last);

/// All activations phi_k(x) and the reconstruction for x of shape [d] or [B, d].
SplitActivations forward_full(const AutoencoderModel& model, const Tensor& x);

/// phi(x): the latent code (mu for variational models).
Tensor encode(const AutoencoderModel& model, const Tensor& x);
/// psi(z).
Tensor decode(const AutoencoderModel& model, const Tensor& z);
/// Y(x) = psi(phi(x)).
Tensor reconstruct(const AutoencoderModel& model, const Tensor& x);

/// Layer widths plus per-layer activations, used to build fresh models.
struct Topology {
  std::vector<std::size_t> widths;  // widths.size() == activations.size() + 1
  std::vector<Activation> activations;
  std::size_t latent_index = 1;
  bool variational = false;
  double beta = 0.0;
};

/// 256-128-32-8-32-128-256, relu hidden layers, linear latent, sigmoid output.
Topology default_topology();

/// Uniform Kaiming-style initialization scaled by fan-in, zero biases.
AutoencoderModel make_autoencoder(const Topology& topology, std::uint64_t seed);

}  // namespace illcond::models
