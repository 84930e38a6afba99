#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "illcond/attacks/attacks.hpp"
#include "illcond/models/autoencoder.hpp"

namespace illcond::defense {

using diffcore::Graph;
using diffcore::Tensor;
using diffcore::Var;
using models::AutoencoderModel;

struct HmcConfig {
  std::size_t leapfrog_steps = 5;
  double step_size = 0.05;
  std::size_t chain_length = 10;
  double noise_scale = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// U(z) = ||psi(z) - x||^2 / (2 s^2) + ||z||^2 / 2 for one sample.
double energy(const AutoencoderModel& model, const Tensor& z, const Tensor& x, double noise_scale);

/// Row-wise energy of [B, n] latents against [B, d] inputs, as a [B] node.
Var energy_node(Graph& g, const models::FrozenModel& model, Var z, Var x, double noise_scale);

/// Gradient of the row-wise energy with respect to z, written out as graph
/// operations (decoder backpropagation by hand) so the result can itself be
/// differentiated.
Var energy_gradient_node(Graph& g, const models::FrozenModel& model, Var z, Var x, double noise_scale);

using GradientFn = std::function<Tensor(const Tensor&)>;

/// L steps of half-kick / drift / half-kick. Throws EvaluationError when the
/// gradient stops being finite.
std::pair<Tensor, Tensor> leapfrog(Tensor z, Tensor p, std::size_t steps, double step_size, const GradientFn& grad);

/// Batched potential: per-row energies and the [B, n] gradient.
struct Potential {
  std::function<std::vector<double>(const Tensor&)> energy;
  GradientFn gradient;
};

struct ChainResult {
  Tensor z;
  std::size_t accepted = 0;
  std::size_t proposed = 0;
};

/// Independent HMC chains, one per row of z0. Row r uses the momentum stream
/// of sample first_sample + r.
ChainResult hmc_chain(const Potential& potential, Tensor z0, const HmcConfig& config, std::size_t first_sample = 0);

/// Seed of the random stream for one (sample, iteration) pair.
std::uint64_t stream_seed(std::uint64_t seed, std::size_t sample, std::size_t iteration);

/// Standard-normal momentum rows for samples [first, first + rows) at one
/// iteration, [rows, width].
Tensor draw_momentum(const HmcConfig& config, std::size_t first, std::size_t rows, std::size_t width,
                     std::size_t iteration);

/// g(Y(x)): z0 = phi(x), K Metropolis-corrected HMC iterations, psi(z_K).
/// x is [d] or [B, d]; row r is treated as sample first_sample + r.
Tensor hmc_refine(const AutoencoderModel& model, const Tensor& x, const HmcConfig& config,
                  std::size_t first_sample = 0, ChainResult* stats = nullptr);

/// ||D(x + rho) - D(x)||_2 per sample with D = g o Y.
attacks::DistortionStats evaluate_defended(const AutoencoderModel& model, const Tensor& dataset, const Tensor& rho,
                                           const HmcConfig& config);

/// Differentiable defended forward pass for the attack loop: K iterations of
/// always-accept Hamiltonian dynamics from phi(x). The latent entry holds
/// the refined z_K and the decoder entries are recomputed from it; encoder
/// entries before the latent are unchanged.
attacks::AttackPath defended_path(const AutoencoderModel& model, const HmcConfig& config);

attacks::AttackResult run_adaptive_attack(const AutoencoderModel& model, const HmcConfig& hmc, const Tensor& dataset,
                                          const attacks::AttackConfig& config,
                                          const attacks::StepObserver& observer = {});

}  // namespace illcond::defense
