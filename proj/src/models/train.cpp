#include "illcond/models/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <span>

#include "illcond/errors.hpp"

namespace illcond::models {
namespace {

using diffcore::Shape;

// Trainable parameters; weights are held transposed ([in, out]) so the
// forward pass is h * Wt + b without a transpose primitive.
struct Param {
  Tensor value;
  Tensor m;
  Tensor v;
};

struct LayerParams {
  std::size_t weight = 0, bias = 0;
  // Variational head only: log-variance half.
  std::size_t lv_weight = 0, lv_bias = 0;
  bool split = false;
};

struct Trainable {
  std::vector<Param> params;
  std::vector<LayerParams> layers;
};

Tensor slice_rows(const Tensor& w, std::size_t begin, std::size_t end) { return w.row_range(begin, end); }

Tensor slice_vec(const Tensor& b, std::size_t begin, std::size_t end) {
  return Tensor::vector(std::vector<double>(b.values().begin() + static_cast<std::ptrdiff_t>(begin),
                                            b.values().begin() + static_cast<std::ptrdiff_t>(end)));
}

Trainable unpack(const AutoencoderModel& model) {
  Trainable t;
  auto add = [&](Tensor v) {
    Tensor z = Tensor::zeros(v.shape());
    t.params.push_back(Param{std::move(v), z, z});
    return t.params.size() - 1;
  };
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& l = model.layers[i];
    LayerParams lp;
    if (model.variational && i + 1 == model.latent_index) {
      const std::size_t n = l.out() / 2;
      lp.split = true;
      lp.weight = add(slice_rows(l.weight, 0, n).transposed());
      lp.bias = add(slice_vec(l.bias, 0, n));
      lp.lv_weight = add(slice_rows(l.weight, n, 2 * n).transposed());
      lp.lv_bias = add(slice_vec(l.bias, n, 2 * n));
    } else {
      lp.weight = add(l.weight.transposed());
      lp.bias = add(l.bias);
    }
    t.layers.push_back(lp);
  }
  return t;
}

AutoencoderModel repack(const AutoencoderModel& shape_of, const Trainable& t) {
  AutoencoderModel m = shape_of;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerParams& lp = t.layers[i];
    Tensor w = t.params[lp.weight].value.transposed();
    Tensor b = t.params[lp.bias].value;
    if (lp.split) {
      Tensor lw = t.params[lp.lv_weight].value.transposed();
      Tensor lb = t.params[lp.lv_bias].value;
      std::vector<double> wv(w.storage());
      wv.insert(wv.end(), lw.storage().begin(), lw.storage().end());
      std::vector<double> bv(b.storage());
      bv.insert(bv.end(), lb.storage().begin(), lb.storage().end());
      w = Tensor::matrix(w.rows() * 2, w.cols(), std::move(wv));
      b = Tensor::vector(std::move(bv));
    }
    m.layers[i].weight = std::move(w);
    m.layers[i].bias = std::move(b);
  }
  return m;
}

struct LossGraph {
  Var loss;
  Var reconstruction_term;
  std::vector<Var> vars;  // parallel to Trainable::params
};

LossGraph build_loss(Graph& g, const AutoencoderModel& model, const Trainable& t, const Tensor& batch,
                     const Tensor& noise) {
  LossGraph lg;
  for (const Param& p : t.params) lg.vars.push_back(g.variable(p.value));
  const double rows = static_cast<double>(batch.rows());
  Var x = g.constant(batch);
  Var h = x;
  std::optional<Var> kl;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerParams& lp = t.layers[i];
    Var pre = diffcore::matmul(h, lg.vars[lp.weight]) + lg.vars[lp.bias];
    if (lp.split) {
      Var mu = pre;
      Var logvar = diffcore::matmul(h, lg.vars[lp.lv_weight]) + lg.vars[lp.lv_bias];
      Var sigma = diffcore::exp(0.5 * logvar);
      h = mu + sigma * g.constant(noise);
      // KL(N(mu, sigma^2) || N(0, I)) = -1/2 sum(1 + logvar - mu^2 - exp(logvar)), batch mean.
      Var ones = g.constant(Tensor::filled(mu.shape(), 1.0));
      Var terms = ones + logvar - mu * mu - diffcore::exp(logvar);
      kl = (-0.5 / rows) * diffcore::sum(terms);
    } else {
      h = apply_activation(model.layers[i].activation, pre);
    }
  }
  const double count = rows * static_cast<double>(batch.cols());
  lg.reconstruction_term = (1.0 / count) * diffcore::squared_norm(h - x);
  lg.loss = lg.reconstruction_term;
  if (kl) lg.loss = lg.loss + model.beta * *kl;
  return lg;
}

Tensor draw_noise(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = normal(rng);
  return Tensor::matrix(rows, cols, std::move(v));
}

void adam_descent(Param& p, const Tensor& grad, double lr, std::size_t t) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double gi = grad[i];
    p.m[i] = b1 * p.m[i] + (1.0 - b1) * gi;
    p.v[i] = b2 * p.v[i] + (1.0 - b2) * gi * gi;
    p.value[i] -= lr * (p.m[i] / c1) / (std::sqrt(p.v[i] / c2) + eps);
  }
}

Tensor gather_rows(const Tensor& data, std::span<const std::size_t> idx) {
  const std::size_t w = data.cols();
  std::vector<double> out;
  out.reserve(idx.size() * w);
  for (std::size_t r : idx) {
    auto row = data.values().subspan(r * w, w);
    out.insert(out.end(), row.begin(), row.end());
  }
  return Tensor::matrix(idx.size(), w, std::move(out));
}

}  // namespace

double training_objective(const AutoencoderModel& model, const Tensor& batch, const Tensor& noise) {
  model.validate();
  Trainable t = unpack(model);
  Graph g;
  LossGraph lg = build_loss(g, model, t, batch, noise);
  return g.evaluate(lg.loss).item();
}

TrainResult train(const AutoencoderModel& model, const Tensor& dataset, const TrainConfig& config) {
  model.validate();
  if (dataset.rank() != 2 || dataset.rows() == 0) throw ConfigError("training dataset must be a non-empty [N, d] tensor");
  if (dataset.cols() != model.input_dim()) throw ShapeError("training data width does not match model input");
  if (config.batch == 0) throw ConfigError("batch size must be positive");
  if (!(config.lr > 0.0)) throw ConfigError("learning rate must be positive");

  TrainResult result{model, {}};
  if (config.epochs == 0) return result;

  Trainable t = unpack(model);
  std::mt19937_64 rng(config.seed);
  const std::size_t n = dataset.rows();
  const std::size_t latent = model.latent_dim();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch) {
      const std::size_t end = std::min(n, start + config.batch);
      Tensor batch = gather_rows(dataset, std::span(order).subspan(start, end - start));
      Tensor noise = model.variational ? draw_noise(rng, end - start, latent) : Tensor::scalar(0.0);
      Graph g;
      LossGraph lg = build_loss(g, model, t, batch, noise);
      double loss = 0.0;
      try {
        loss = g.evaluate(lg.loss).item();
      } catch (const EvaluationError& e) {
        throw DivergenceError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what(), epoch);
      }
      diffcore::Gradients grads = g.backward(lg.loss);
      ++step;
      for (std::size_t p = 0; p < t.params.size(); ++p) adam_descent(t.params[p], grads[lg.vars[p]], config.lr, step);
      for (const Param& p : t.params) {
        if (!p.value.all_finite()) {
          throw DivergenceError("training diverged in epoch " + std::to_string(epoch) + ": non-finite weights", epoch);
        }
      }
      total += loss;
      ++batches;
    }
    const double mean = total / static_cast<double>(batches);
    result.loss_curve.push_back(mean);
    if (config.loss_threshold && mean < *config.loss_threshold) break;
  }
  result.model = repack(model, t);
  return result;
}

double reconstruction_mse(const AutoencoderModel& model, const Tensor& dataset) {
  Tensor y = reconstruct(model, dataset);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - dataset[i];
    s += d * d;
  }
  return s / static_cast<double>(y.size());
}

}  // namespace illcond::models
