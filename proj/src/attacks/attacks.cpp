#include "illcond/attacks/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "illcond/errors.hpp"
#include "illcond/spectral/svd.hpp"

namespace illcond::attacks {

using diffcore::Shape;
using distances::batch_distortion;
using models::FrozenModel;

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::oa: return "oa";
    case Strategy::la: return "la";
    case Strategy::lgr: return "lgr";
    case Strategy::grill: return "grill";
    case Strategy::grill_sum: return "grill-sum";
  }
  return "oa";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::oa, Strategy::la, Strategy::lgr, Strategy::grill, Strategy::grill_sum}) {
    if (name == strategy_name(s)) return s;
  }
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

std::string_view norm_name(Norm n) { return n == Norm::linf ? "inf" : "l2"; }

Norm parse_norm(std::string_view name) {
  if (name == "inf" || name == "linf") return Norm::linf;
  if (name == "l2") return Norm::l2;
  throw ConfigError("unknown norm '" + std::string(name) + "'");
}

std::string_view weighting_name(Weighting w) {
  switch (w) {
    case Weighting::equal: return "equal";
    case Weighting::random: return "random";
    case Weighting::inverse_kappa: return "invkappa";
  }
  return "equal";
}

Weighting parse_weighting(std::string_view name) {
  if (name == "equal") return Weighting::equal;
  if (name == "random") return Weighting::random;
  if (name == "invkappa" || name == "inverse-kappa") return Weighting::inverse_kappa;
  throw ConfigError("unknown weighting '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("eps must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("step size must be positive");
  if (batch == 0) throw ConfigError("batch size must be at least 1");
  if (!(xi() >= 0.0) || !(xi() < eps)) throw ConfigError("init scale must lie in [0, eps)");
  if (!(layer_fraction > 0.0) || layer_fraction > 1.0) throw ConfigError("layer fraction must lie in (0, 1]");
}

std::vector<std::size_t> select_splits(std::size_t layer_count, std::size_t latent_index, double fraction) {
  if (layer_count < 2) throw ConfigError("model has no interior split");
  const std::size_t interior = layer_count - 1;
  const auto want = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(interior) - 1e-12));
  if (!(fraction > 0.0) || want == 0) throw ConfigError("layer fraction selects no split");
  std::vector<std::size_t> ks(interior);
  for (std::size_t k = 1; k <= interior; ++k) ks[k - 1] = k;
  auto dist = [&](std::size_t k) { return k > latent_index ? k - latent_index : latent_index - k; };
  std::stable_sort(ks.begin(), ks.end(), [&](std::size_t a, std::size_t b) { return dist(a) < dist(b); });
  ks.resize(std::min(want, interior));
  return ks;
}

std::vector<double> split_weights(const AutoencoderModel& model, const std::vector<std::size_t>& splits,
                                  Weighting weighting, std::uint64_t seed) {
  std::vector<double> w(splits.size(), 1.0);
  if (weighting == Weighting::equal) return w;
  if (weighting == Weighting::random) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : w) v = u(rng);
  } else {
    for (std::size_t i = 0; i < splits.size(); ++i) {
      const auto e = spectral::svd_extremes(model.layers.at(splits[i] - 1).weight);
      if (!(e.ratio > 0.0)) throw ConfigError("layer " + std::to_string(splits[i] - 1) + " has no nonzero singular value");
      w[i] = 1.0 / e.ratio;
    }
  }
  double total = 0.0;
  for (double v : w) total += v;
  if (!(total > 0.0)) throw ConfigError("split weights sum to zero");
  for (double& v : w) v /= total;
  return w;
}

Objective make_objective(const AutoencoderModel& model, const AttackConfig& config) {
  Objective o;
  o.strategy = config.strategy;
  o.distance = config.distance;
  o.latent_index = model.latent_index;
  if (config.strategy == Strategy::grill || config.strategy == Strategy::grill_sum) {
    o.splits = select_splits(model.layer_count(), model.latent_index, config.layer_fraction);
    const Weighting w = config.strategy == Strategy::grill ? config.weighting : Weighting::equal;
    o.weights = split_weights(model, o.splits, w, config.seed);
    o.unit_weights = w == Weighting::equal;
  }
  return o;
}

Var objective_value(Graph& g, const Objective& o, const std::vector<Var>& adv, const std::vector<Tensor>& clean) {
  auto delta = [&](std::size_t k) { return batch_distortion(o.distance, adv.at(k - 1), g.constant(clean.at(k - 1))); };
  auto output = [&] { return batch_distortion(o.distance, adv.back(), g.constant(clean.back())); };
  auto split_sum = [&] {
    Var total{};
    for (std::size_t i = 0; i < o.splits.size(); ++i) {
      Var term = delta(o.splits[i]);
      if (!o.unit_weights) term = scale(term, o.weights[i]);
      total = i == 0 ? term : total + term;
    }
    return total;
  };
  switch (o.strategy) {
    case Strategy::oa: return output();
    case Strategy::la: return delta(o.latent_index);
    case Strategy::lgr: return delta(o.latent_index) * output();
    case Strategy::grill: return split_sum() * output();
    case Strategy::grill_sum: return output() + split_sum();
  }
  throw ConfigError("unknown strategy");
}

namespace {

Tensor as_batch(const Tensor& x) {
  if (x.rank() == 1) return x.reshaped({1, x.size()});
  if (x.rank() != 2) throw ShapeError("expected a sample or a batch, got shape " + diffcore::shape_string(x.shape()));
  return x;
}

std::vector<Tensor> clean_activations(const FrozenModel& frozen, const Tensor& batch) {
  Graph g;
  auto outs = models::forward_layers(g, frozen, g.constant(batch), 0, frozen.layers().size());
  std::vector<Tensor> result;
  result.reserve(outs.size());
  for (Var v : outs) result.push_back(g.evaluate(v));
  return result;
}

}  // namespace

AttackPath plain_path(const AutoencoderModel& model) {
  auto frozen = std::make_shared<const FrozenModel>(model);
  AttackPath path;
  path.adversarial = [frozen](Graph& g, Var x_adv, std::size_t) {
    return models::forward_layers(g, *frozen, x_adv, 0, frozen->layers().size());
  };
  path.clean = [frozen](const Tensor& batch, std::size_t) { return clean_activations(*frozen, batch); };
  return path;
}

LossAndGradient attack_loss(const AutoencoderModel& model, const Tensor& x_batch, const Tensor& rho,
                            const AttackConfig& config) {
  const Tensor batch = as_batch(x_batch);
  if (rho.rank() != 1 || rho.size() != batch.cols()) {
    throw ShapeError("perturbation shape " + diffcore::shape_string(rho.shape()) + " does not match input width " +
                     std::to_string(batch.cols()));
  }
  AttackPath path = plain_path(model);
  Objective o = make_objective(model, config);
  Graph g;
  Var r = g.variable(rho);
  Var xa = g.constant(batch) + r;
  Var loss = objective_value(g, o, path.adversarial(g, xa, 0), path.clean(batch, 0));
  LossAndGradient out;
  out.value = g.evaluate(loss).item();
  out.gradient = g.backward(loss)[r];
  return out;
}

namespace {

double tensor_loss(Strategy s, const AutoencoderModel& model, const Tensor& x, const Tensor& rho, DistanceKind d,
                   double fraction = 1.0, Weighting w = Weighting::equal, std::uint64_t seed = 0) {
  AttackConfig c;
  c.strategy = s;
  c.distance = d;
  c.layer_fraction = fraction;
  c.weighting = w;
  c.seed = seed;
  return attack_loss(model, x, rho, c).value;
}

}  // namespace

double loss_oa(const AutoencoderModel& m, const Tensor& x, const Tensor& rho, DistanceKind d) {
  return tensor_loss(Strategy::oa, m, x, rho, d);
}
double loss_la(const AutoencoderModel& m, const Tensor& x, const Tensor& rho, DistanceKind d) {
  return tensor_loss(Strategy::la, m, x, rho, d);
}
double loss_lgr(const AutoencoderModel& m, const Tensor& x, const Tensor& rho, DistanceKind d) {
  return tensor_loss(Strategy::lgr, m, x, rho, d);
}
double loss_grill(const AutoencoderModel& m, const Tensor& x, const Tensor& rho, DistanceKind d, double fraction,
                  Weighting w, std::uint64_t seed) {
  return tensor_loss(Strategy::grill, m, x, rho, d, fraction, w, seed);
}
double loss_grill_sum(const AutoencoderModel& m, const Tensor& x, const Tensor& rho, DistanceKind d) {
  return tensor_loss(Strategy::grill_sum, m, x, rho, d);
}

double norm_of(const Tensor& rho, Norm p) {
  return p == Norm::linf ? diffcore::linf_norm(rho.values()) : diffcore::l2_norm(rho.values());
}

Tensor project(Tensor rho, double eps, Norm p) {
  if (!(eps > 0.0)) throw ConfigError("projection radius must be positive");
  if (p == Norm::linf) {
    for (double& v : rho.data()) v = std::clamp(v, -eps, eps);
    return rho;
  }
  double n = diffcore::l2_norm(rho.values());
  // Rounding can leave the rescaled norm a hair above eps; shrink until it is not.
  double shrink = 1.0;
  while (n > eps) {
    const double f = eps / n * shrink;
    for (double& v : rho.data()) v *= f;
    n = diffcore::l2_norm(rho.values());
    shrink *= 1.0 - 1e-15;
  }
  return rho;
}

void adam_step(AdamState& s, Tensor& rho, const Tensor& grad, double lr) {
  if (grad.size() != rho.size() || s.m.size() != rho.size()) {
    throw ShapeError("adam step: gradient " + diffcore::shape_string(grad.shape()) + " vs perturbation " +
                     diffcore::shape_string(rho.shape()));
  }
  ++s.t;
  const double c1 = 1.0 - std::pow(AdamState::beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(AdamState::beta2, static_cast<double>(s.t));
  auto m = s.m.data();
  auto v = s.v.data();
  auto r = rho.data();
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double g = grad[i];
    m[i] = AdamState::beta1 * m[i] + (1.0 - AdamState::beta1) * g;
    v[i] = AdamState::beta2 * v[i] + (1.0 - AdamState::beta2) * g * g;
    r[i] += lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + AdamState::eps_hat);
  }
}

Tensor perturb(const Tensor& dataset, const Tensor& rho) {
  Tensor out = as_batch(dataset);
  if (rho.size() != out.cols()) {
    throw ShapeError("perturbation shape " + diffcore::shape_string(rho.shape()) + " does not match input width " +
                     std::to_string(out.cols()));
  }
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += rho[i % rho.size()];
  return out;
}

AttackResult run_attack(const AutoencoderModel& model, const Tensor& dataset, const AttackConfig& config,
                        const AttackPath& path, const StepObserver& observer) {
  config.validate();
  const Tensor data = as_batch(dataset);
  const std::size_t n = data.rows(), d = data.cols();
  if (d != model.input_dim()) {
    throw ShapeError("dataset width " + std::to_string(d) + " does not match model input " +
                     std::to_string(model.input_dim()));
  }
  const Objective objective = make_objective(model, config);

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> init(-config.xi(), config.xi());
  std::vector<double> r0(d);
  for (double& v : r0) v = config.xi() > 0.0 ? init(rng) : 0.0;
  AttackResult result{Tensor::vector(std::move(r0)), {}};
  Tensor& rho = result.rho;
  AttackTrace& trace = result.trace;
  AdamState adam(rho.shape());

  std::mt19937_64 reservoir_rng(config.seed ^ 0x5eed5eed5eedULL);
  auto record_gradient = [&](const Tensor& grad) {
    for (double v : grad.values()) {
      if (trace.gradient_samples.size() < config.reservoir) {
        trace.gradient_samples.push_back(v);
      } else if (config.reservoir > 0) {
        std::uniform_int_distribution<std::size_t> pick(0, trace.gradient_seen);
        const std::size_t j = pick(reservoir_rng);
        if (j < config.reservoir) trace.gradient_samples[j] = v;
      }
      ++trace.gradient_seen;
    }
  };

  struct Batch {
    std::size_t begin;
    Tensor x;
    std::vector<Tensor> clean;
  };
  std::vector<Batch> batches;
  for (std::size_t b = 0; b < n; b += config.batch) {
    const std::size_t e = std::min(n, b + config.batch);
    Tensor x = data.row_range(b, e);
    std::vector<Tensor> clean;
    try {
      clean = path.clean(x, b);
    } catch (const EvaluationError& e) {
      throw DivergenceError(std::string("clean forward pass became non-finite at step 0: ") + e.what(), 0);
    }
    batches.push_back({b, std::move(x), std::move(clean)});
  }

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.steps; ++epoch) {
    double objective_sum = 0.0, distortion_sum = 0.0;
    for (const Batch& batch : batches) {
      Graph g;
      Var r = g.variable(rho);
      Var xa = g.constant(batch.x) + r;
      std::vector<Var> adv = path.adversarial(g, xa, batch.begin);
      Var loss = objective_value(g, objective, adv, batch.clean);
      double value = 0.0;
      try {
        value = g.evaluate(loss).item();
        g.evaluate(adv.back());
      } catch (const EvaluationError& e) {
        throw DivergenceError("attack objective became non-finite at step " + std::to_string(step) + ": " + e.what(),
                              step);
      }
      distortion_sum += distances::batch_distortion(DistanceKind::l2, g.value(adv.back()), batch.clean.back());
      Tensor grad = g.backward(loss)[r];
      if (!grad.all_finite()) {
        throw DivergenceError("attack gradient became non-finite at step " + std::to_string(step), step);
      }
      if (observer) observer(StepInfo{epoch, step, batch.begin, rho, batch.x, grad, value});
      record_gradient(grad);
      adam_step(adam, rho, grad, config.lr);
      rho = project(std::move(rho), config.eps, config.norm);
      const double norm = norm_of(rho, config.norm);
      if (norm > config.eps) throw StateError("projection left the perturbation outside the budget");
      trace.max_rho_norm = std::max(trace.max_rho_norm, norm);
      objective_sum += value;
      ++step;
    }
    trace.objective.push_back(objective_sum);
    trace.distortion.push_back(distortion_sum / static_cast<double>(n));
    trace.rho_norm.push_back(norm_of(rho, config.norm));
  }
  return result;
}

AttackResult run_universal_attack(const AutoencoderModel& model, const Tensor& dataset, const AttackConfig& config,
                                  const StepObserver& observer) {
  return run_attack(model, dataset, config, plain_path(model), observer);
}

AttackResult run_sample_attack(const AutoencoderModel& model, const Tensor& x, const AttackConfig& config,
                               const StepObserver& observer) {
  AttackConfig c = config;
  c.batch = 1;
  Tensor one = as_batch(x);
  if (one.rows() != 1) throw ShapeError("sample attack expects a single sample");
  return run_attack(model, one, c, plain_path(model), observer);
}

DistortionStats summarize(std::vector<double> per_sample) {
  DistortionStats s;
  s.per_sample = std::move(per_sample);
  if (s.per_sample.empty()) return s;
  const double n = static_cast<double>(s.per_sample.size());
  for (double v : s.per_sample) s.mean += v;
  s.mean /= n;
  double var = 0.0;
  for (double v : s.per_sample) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / n);
  return s;
}

DistortionStats evaluate_attack(const AutoencoderModel& model, const Tensor& dataset, const Tensor& rho) {
  const Tensor data = as_batch(dataset);
  const Tensor clean = models::reconstruct(model, data);
  const Tensor adv = models::reconstruct(model, perturb(data, rho));
  std::vector<double> out(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) out[i] = distances::dist_l2(adv.row(i), clean.row(i));
  return summarize(std::move(out));
}

}  // namespace illcond::attacks
