#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "illcond/attacks/attacks.hpp"
#include "illcond/defense/hmc.hpp"
#include "illcond/models/train.hpp"

namespace illcond::harness {

using diffcore::Tensor;

/// One [attack] section: a base attack configuration expanded over an eps
/// grid and, when `defended` is "both", over the two defense settings.
struct AttackSection {
  attacks::AttackConfig base;
  std::vector<double> eps_grid{0.04, 0.05, 0.07};
  std::vector<bool> defended{false};
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "results";

  /// Loaded when set and present; otherwise trained and saved there.
  std::optional<std::filesystem::path> model_path;
  models::TrainConfig train{30, 1e-3, 32, 0, std::nullopt};

  std::optional<std::filesystem::path> image_dir;
  std::size_t side = 16;
  std::size_t train_samples = 1000;
  std::size_t attack_samples = 256;
  std::size_t eval_samples = 2000;

  /// Layers (0-based) whose smallest singular values are floored after
  /// training.
  std::vector<std::size_t> inject_layers;
  double inject_floor = 1e-6;
  std::size_t inject_count = 1;

  defense::HmcConfig hmc;

  std::size_t hist_bins = 101;
  double hist_lo = -1e-3;
  double hist_hi = 1e-3;

  std::vector<AttackSection> attacks;

  /// Throws ConfigError on a broken invariant.
  void validate() const;
};

/// Flat `key = value` text; `#` starts a comment; each `[attack]` header
/// opens a new attack section. Throws ParseError with the byte offset of the
/// offending line.
ExperimentConfig parse_experiment_config(std::string_view text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// One expanded row of the experiment matrix.
struct RowSpec {
  attacks::AttackConfig attack;
  bool defended = false;
};
std::vector<RowSpec> expand_rows(const ExperimentConfig& config);

struct ResultRow {
  RowSpec spec;
  std::size_t n = 0;
  double mean = 0.0, std = 0.0, min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  double runtime_seconds = 0.0;
  bool ok = false;
  std::string error;
  std::vector<double> per_sample;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  bool all_ok() const;
};

/// Row file prefix inside the output directory, e.g. "row002_grill-l2-eps0.05".
std::string row_stem(std::size_t index, const RowSpec& spec);

/// Train-or-load the model, then for each row: attack (adaptive when
/// defended) -> evaluate -> record. Writes results.csv, spectral.csv,
/// boxplot.svg and per-row per_sample/convergence/histogram/rho CSVs.
/// A failing row is recorded with its error; the remaining rows still run.
/// Rows run concurrently on up to row_threads() workers.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// ILLCOND_THREADS if set and positive, else the hardware concurrency.
std::size_t row_threads();

/// Dataset rows for training, attack and evaluation.
struct ExperimentData {
  Tensor train, attack, eval;
};
ExperimentData load_experiment_data(const ExperimentConfig& config);

/// Train-or-load plus conditioning injection.
models::AutoencoderModel prepare_model(const ExperimentConfig& config, const Tensor& train_set);

}  // namespace illcond::harness
