#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "illcond/diffcore/graph.hpp"
#include "illcond/distances/distances.hpp"
#include "illcond/models/autoencoder.hpp"

namespace illcond::attacks {

using diffcore::Graph;
using diffcore::Tensor;
using diffcore::Var;
using distances::DistanceKind;
using models::AutoencoderModel;

enum class Strategy { oa, la, lgr, grill, grill_sum };
enum class Norm { linf, l2 };
enum class Weighting { equal, random, inverse_kappa };

/// oa, la, lgr, grill, grill-sum
std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);
/// inf, l2
std::string_view norm_name(Norm n);
Norm parse_norm(std::string_view name);
/// equal, random, invkappa
std::string_view weighting_name(Weighting w);
Weighting parse_weighting(std::string_view name);

struct AttackConfig {
  Strategy strategy = Strategy::oa;
  DistanceKind distance = DistanceKind::l2;
  double eps = 0.05;
  Norm norm = Norm::linf;
  std::size_t steps = 500;
  double lr = 1e-4;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  /// Half-width of the uniform initialization; eps / 100 when unset.
  std::optional<double> init_scale;
  double layer_fraction = 1.0;
  Weighting weighting = Weighting::equal;
  std::size_t reservoir = 100000;

  double xi() const { return init_scale.value_or(eps / 100.0); }
  /// Throws ConfigError on a broken invariant.
  void validate() const;
};

/// Split indices k (1-based: split k compares the outputs of layer k) used by
/// GRILL: ceil(fraction * (n - 1)) interior splits ordered by distance to the
/// latent index, ties toward the input side.
std::vector<std::size_t> select_splits(std::size_t layer_count, std::size_t latent_index, double fraction);

/// Per-split weights. equal -> 1 each; random -> seeded U(0,1) normalized to
/// sum 1; inverse_kappa -> proportional to 1 / (sigma_max / sigma_min_nonzero)
/// of layer k's weight, normalized to sum 1.
std::vector<double> split_weights(const AutoencoderModel& model, const std::vector<std::size_t>& splits,
                                  Weighting weighting, std::uint64_t seed);

/// Everything needed to turn activations into an attack objective.
struct Objective {
  Strategy strategy = Strategy::oa;
  DistanceKind distance = DistanceKind::l2;
  std::size_t latent_index = 1;
  std::vector<std::size_t> splits;
  std::vector<double> weights;
  bool unit_weights = true;
};

Objective make_objective(const AutoencoderModel& model, const AttackConfig& config);

/// Objective from per-layer adversarial activation nodes and the matching
/// clean activations (entry k-1 holds the output of layer k; the last entry
/// is the reconstruction). Only the entries the strategy reads need to be
/// meaningful.
Var objective_value(Graph& g, const Objective& objective, const std::vector<Var>& adversarial,
                    const std::vector<Tensor>& clean);

/// Objective value at x_batch + rho together with its gradient in rho.
struct LossAndGradient {
  double value = 0.0;
  Tensor gradient;
};
LossAndGradient attack_loss(const AutoencoderModel& model, const Tensor& x_batch, const Tensor& rho,
                            const AttackConfig& config);

double loss_oa(const AutoencoderModel& model, const Tensor& x_batch, const Tensor& rho, DistanceKind d);
double loss_la(const AutoencoderModel& model, const Tensor& x_batch, const Tensor& rho, DistanceKind d);
double loss_lgr(const AutoencoderModel& model, const Tensor& x_batch, const Tensor& rho, DistanceKind d);
double loss_grill(const AutoencoderModel& model, const Tensor& x_batch, const Tensor& rho, DistanceKind d,
                  double layer_fraction = 1.0, Weighting weighting = Weighting::equal, std::uint64_t seed = 0);
double loss_grill_sum(const AutoencoderModel& model, const Tensor& x_batch, const Tensor& rho, DistanceKind d);

/// Projection onto the eps-ball of the given norm. Throws ConfigError if eps <= 0.
Tensor project(Tensor rho, double eps, Norm p);
double norm_of(const Tensor& rho, Norm p);

struct AdamState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps_hat = 1e-8;

  Tensor m;
  Tensor v;
  std::size_t t = 0;

  explicit AdamState(const diffcore::Shape& shape) : m(Tensor::zeros(shape)), v(Tensor::zeros(shape)) {}
};

/// Bias-corrected Adam update in the ascent direction.
void adam_step(AdamState& state, Tensor& rho, const Tensor& grad, double lr);

/// Per-epoch record of an attack run.
struct AttackTrace {
  std::vector<double> objective;   // summed over the epoch's batches
  std::vector<double> distortion;  // mean per-sample output L2 at the pre-update rho
  std::vector<double> rho_norm;    // ||rho||_p after the epoch
  double max_rho_norm = 0.0;       // largest post-projection norm over every step
  std::vector<double> gradient_samples;  // reservoir of partial derivatives
  std::size_t gradient_seen = 0;
};

struct StepInfo {
  std::size_t epoch;
  std::size_t step;
  std::size_t batch_begin;
  const Tensor& rho;       // before the update
  const Tensor& batch;
  const Tensor& gradient;
  double objective;
};
using StepObserver = std::function<void(const StepInfo&)>;

struct AttackResult {
  Tensor rho;
  AttackTrace trace;
};

/// Adversarial and clean activations for one batch. `adversarial` builds
/// per-layer nodes from the perturbed input node; `clean` returns the
/// reference activations. batch_begin is the dataset row of the first
/// sample so stochastic paths can seed per sample.
struct AttackPath {
  std::function<std::vector<Var>(Graph&, Var x_adv, std::size_t batch_begin)> adversarial;
  std::function<std::vector<Tensor>(const Tensor& batch, std::size_t batch_begin)> clean;
};

/// Undefended forward pass through every layer.
AttackPath plain_path(const AutoencoderModel& model);

/// Attack loop: rho ~ U(-xi, xi); for each epoch, for each batch in
/// dataset order: objective -> gradient -> Adam ascent -> projection.
/// Throws DivergenceError carrying the step index on a non-finite objective.
AttackResult run_attack(const AutoencoderModel& model, const Tensor& dataset, const AttackConfig& config,
                        const AttackPath& path, const StepObserver& observer = {});

AttackResult run_universal_attack(const AutoencoderModel& model, const Tensor& dataset, const AttackConfig& config,
                                  const StepObserver& observer = {});

/// Same loop with a single sample and batch size 1.
AttackResult run_sample_attack(const AutoencoderModel& model, const Tensor& x, const AttackConfig& config,
                               const StepObserver& observer = {});

struct DistortionStats {
  std::vector<double> per_sample;
  double mean = 0.0;
  double std = 0.0;  // population
};

DistortionStats summarize(std::vector<double> per_sample);

/// ||Y(x + rho) - Y(x)||_2 for every row of the dataset.
DistortionStats evaluate_attack(const AutoencoderModel& model, const Tensor& dataset, const Tensor& rho);

/// dataset + rho broadcast over rows.
Tensor perturb(const Tensor& dataset, const Tensor& rho);

}  // namespace illcond::attacks
