#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "illcond/models/autoencoder.hpp"

namespace illcond::models {

struct TrainConfig {
  std::size_t epochs = 100;
  double lr = 1e-3;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  /// Stop once an epoch's mean loss falls below this value.
  std::optional<double> loss_threshold;
};

struct TrainResult {
  AutoencoderModel model;
  std::vector<double> loss_curve;  // mean loss per completed epoch
};

/// Mini-batch Adam on mean squared reconstruction error, plus beta * KL to a
/// standard normal for variational models (reparameterized with seeded
/// noise). Deterministic given config.seed. Throws DivergenceError carrying
/// the epoch when the loss stops being finite.
TrainResult train(const AutoencoderModel& model, const Tensor& dataset, const TrainConfig& config);

/// Training objective for one batch. `noise` is the [B, n] reparameterization
/// draw and is ignored for deterministic models.
double training_objective(const AutoencoderModel& model, const Tensor& batch, const Tensor& noise);

/// Mean squared reconstruction error over a dataset, mu path.
double reconstruction_mse(const AutoencoderModel& model, const Tensor& dataset);

}  // namespace illcond::models
