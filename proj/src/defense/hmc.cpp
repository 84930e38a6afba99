#include "illcond/defense/hmc.hpp"

#include <cmath>
#include <memory>
#include <random>

#include "illcond/distances/distances.hpp"
#include "illcond/errors.hpp"

namespace illcond::defense {

using diffcore::Shape;
using models::Activation;
using models::FrozenModel;

void HmcConfig::validate() const {
  if (leapfrog_steps < 1) throw ConfigError("leapfrog steps must be at least 1");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ConfigError("HMC step size must be positive");
  if (!(noise_scale > 0.0) || !std::isfinite(noise_scale)) throw ConfigError("noise scale must be positive");
}

namespace {

Tensor as_batch(const Tensor& x) { return x.rank() == 1 ? x.reshaped({1, x.size()}) : x; }

Var decode_node(Graph& g, const FrozenModel& m, Var z) {
  return models::forward_layers(g, m, z, m.latent_index(), m.layers().size()).back();
}

}  // namespace

Var energy_node(Graph& g, const FrozenModel& m, Var z, Var x, double s) {
  Var r = decode_node(g, m, z) - x;
  return scale(diffcore::row_sum(r * r), 1.0 / (2.0 * s * s)) + scale(diffcore::row_sum(z * z), 0.5);
}

Var energy_gradient_node(Graph& g, const FrozenModel& m, Var z, Var x, double s) {
  const auto& layers = m.layers();
  std::vector<Var> pre, post;
  Var h = z;
  for (std::size_t i = m.latent_index(); i < layers.size(); ++i) {
    Var a = diffcore::matmul(h, g.constant(layers[i].weight_t)) + g.constant(layers[i].bias);
    h = models::apply_activation(layers[i].activation, a);
    pre.push_back(a);
    post.push_back(h);
  }
  Var grad = scale(h - x, 1.0 / (s * s));
  for (std::size_t j = post.size(); j-- > 0;) {
    const auto& layer = layers[m.latent_index() + j];
    Var y = post[j];
    switch (layer.activation) {
      case Activation::relu: grad = grad * diffcore::step(pre[j]); break;
      case Activation::tanh: {
        Var one = g.constant(Tensor::filled(y.shape(), 1.0));
        grad = grad * (one - y * y);
        break;
      }
      case Activation::sigmoid: {
        Var one = g.constant(Tensor::filled(y.shape(), 1.0));
        grad = grad * (y * (one - y));
        break;
      }
      case Activation::identity: break;
    }
    grad = diffcore::matmul(grad, g.constant(layer.weight));
  }
  return grad + z;
}

double energy(const AutoencoderModel& model, const Tensor& z, const Tensor& x, double s) {
  FrozenModel m(model);
  Graph g;
  return g.evaluate(energy_node(g, m, g.constant(as_batch(z)), g.constant(as_batch(x)), s)).item();
}

std::pair<Tensor, Tensor> leapfrog(Tensor z, Tensor p, std::size_t steps, double eps, const GradientFn& grad) {
  if (z.size() != p.size()) throw ShapeError("leapfrog: position and momentum shapes differ");
  auto checked = [&](const Tensor& at) {
    Tensor gz = grad(at);
    if (!gz.all_finite()) throw EvaluationError("leapfrog: energy gradient is not finite");
    return gz;
  };
  Tensor gz = checked(z);
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= 0.5 * eps * gz[i];
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += eps * p[i];
    gz = checked(z);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= 0.5 * eps * gz[i];
  }
  return {std::move(z), std::move(p)};
}

std::uint64_t stream_seed(std::uint64_t seed, std::size_t sample, std::size_t iteration) {
  auto mix = [](std::uint64_t v) {
    v += 0x9e3779b97f4a7c15ULL;
    v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ULL;
    v = (v ^ (v >> 27)) * 0x94d049bb133111ebULL;
    return v ^ (v >> 31);
  };
  return mix(mix(mix(seed) ^ sample) ^ iteration);
}

namespace {

// Momentum first, then the Metropolis uniform, from one stream per row.
struct RowDraw {
  std::vector<double> momentum;
  double uniform;
};

RowDraw draw_row(const HmcConfig& c, std::size_t sample, std::size_t iteration, std::size_t width) {
  std::mt19937_64 rng(stream_seed(c.seed, sample, iteration));
  std::normal_distribution<double> n(0.0, 1.0);
  RowDraw d{std::vector<double>(width), 0.0};
  for (double& v : d.momentum) v = n(rng);
  d.uniform = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return d;
}

}  // namespace

Tensor draw_momentum(const HmcConfig& c, std::size_t first, std::size_t rows, std::size_t width,
                     std::size_t iteration) {
  std::vector<double> v;
  v.reserve(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    auto d = draw_row(c, first + r, iteration, width);
    v.insert(v.end(), d.momentum.begin(), d.momentum.end());
  }
  return Tensor(Shape{rows, width}, std::move(v));
}

ChainResult hmc_chain(const Potential& potential, Tensor z0, const HmcConfig& c, std::size_t first_sample) {
  c.validate();
  Tensor z = as_batch(z0);
  const std::size_t rows = z.rows(), width = z.cols();
  ChainResult result;
  for (std::size_t it = 0; it < c.chain_length; ++it) {
    std::vector<RowDraw> draws;
    draws.reserve(rows);
    std::vector<double> pv;
    pv.reserve(rows * width);
    for (std::size_t r = 0; r < rows; ++r) {
      draws.push_back(draw_row(c, first_sample + r, it, width));
      pv.insert(pv.end(), draws.back().momentum.begin(), draws.back().momentum.end());
    }
    Tensor p(Shape{rows, width}, std::move(pv));
    const std::vector<double> u0 = potential.energy(z);
    auto [z1, p1] = leapfrog(z, p, c.leapfrog_steps, c.step_size, potential.gradient);
    const std::vector<double> u1 = potential.energy(z1);
    for (std::size_t r = 0; r < rows; ++r) {
      double k0 = 0.0, k1 = 0.0;
      for (std::size_t j = 0; j < width; ++j) {
        k0 += p[r * width + j] * p[r * width + j];
        k1 += p1[r * width + j] * p1[r * width + j];
      }
      const double h0 = u0[r] + 0.5 * k0, h1 = u1[r] + 0.5 * k1;
      ++result.proposed;
      if (std::isfinite(h1) && std::log(draws[r].uniform) < h0 - h1) {
        ++result.accepted;
        for (std::size_t j = 0; j < width; ++j) z[r * width + j] = z1[r * width + j];
      }
    }
  }
  result.z = std::move(z);
  return result;
}

Tensor hmc_refine(const AutoencoderModel& model, const Tensor& x, const HmcConfig& c, std::size_t first_sample,
                  ChainResult* stats) {
  c.validate();
  const bool single = x.rank() == 1;
  const Tensor xb = as_batch(x);
  auto frozen = std::make_shared<const FrozenModel>(model);
  Tensor z0 = models::encode(model, xb);
  Potential pot;
  pot.energy = [&](const Tensor& z) {
    Graph g;
    const Tensor& e = g.evaluate(energy_node(g, *frozen, g.constant(z), g.constant(xb), c.noise_scale));
    return std::vector<double>(e.values().begin(), e.values().end());
  };
  pot.gradient = [&](const Tensor& z) {
    Graph g;
    return g.evaluate(energy_gradient_node(g, *frozen, g.constant(z), g.constant(xb), c.noise_scale));
  };
  ChainResult chain = hmc_chain(pot, std::move(z0), c, first_sample);
  Tensor out = models::decode(model, chain.z);
  if (stats) *stats = chain;
  return single ? out.reshaped({out.size()}) : out;
}

attacks::DistortionStats evaluate_defended(const AutoencoderModel& model, const Tensor& dataset, const Tensor& rho,
                                           const HmcConfig& config) {
  const Tensor data = as_batch(dataset);
  const Tensor clean = hmc_refine(model, data, config);
  const Tensor adv = hmc_refine(model, attacks::perturb(data, rho), config);
  std::vector<double> out(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) out[i] = distances::dist_l2(adv.row(i), clean.row(i));
  return attacks::summarize(std::move(out));
}

namespace {

std::vector<Var> defended_layers(Graph& g, const FrozenModel& m, const HmcConfig& c, Var x, std::size_t first) {
  const std::size_t k = m.latent_index();
  std::vector<Var> acts = models::forward_layers(g, m, x, 0, k);
  Var z = acts.back();
  const std::size_t rows = z.shape().size() == 2 ? z.shape()[0] : 1;
  const std::size_t width = z.shape().back();
  const double eps = c.step_size;
  for (std::size_t it = 0; it < c.chain_length; ++it) {
    Var p = g.constant(draw_momentum(c, first, rows, width, it).reshaped(z.shape()));
    Var grad = energy_gradient_node(g, m, z, x, c.noise_scale);
    for (std::size_t s = 0; s < c.leapfrog_steps; ++s) {
      p = p - scale(grad, 0.5 * eps);
      z = z + scale(p, eps);
      grad = energy_gradient_node(g, m, z, x, c.noise_scale);
      p = p - scale(grad, 0.5 * eps);
    }
  }
  acts.back() = z;
  auto dec = models::forward_layers(g, m, z, k, m.layers().size());
  acts.insert(acts.end(), dec.begin(), dec.end());
  return acts;
}

}  // namespace

attacks::AttackPath defended_path(const AutoencoderModel& model, const HmcConfig& config) {
  config.validate();
  auto frozen = std::make_shared<const FrozenModel>(model);
  attacks::AttackPath path;
  path.adversarial = [frozen, config](Graph& g, Var x_adv, std::size_t first) {
    return defended_layers(g, *frozen, config, x_adv, first);
  };
  path.clean = [frozen, config](const Tensor& batch, std::size_t first) {
    Graph g;
    auto acts = defended_layers(g, *frozen, config, g.constant(batch), first);
    std::vector<Tensor> out;
    out.reserve(acts.size());
    for (Var v : acts) out.push_back(g.evaluate(v));
    return out;
  };
  return path;
}

attacks::AttackResult run_adaptive_attack(const AutoencoderModel& model, const HmcConfig& hmc, const Tensor& dataset,
                                          const attacks::AttackConfig& config,
                                          const attacks::StepObserver& observer) {
  return attacks::run_attack(model, dataset, config, defended_path(model, hmc), observer);
}

}  // namespace illcond::defense
