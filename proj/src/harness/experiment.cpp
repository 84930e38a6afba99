#include "illcond/harness/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "illcond/errors.hpp"
#include "illcond/harness/dataset.hpp"
#include "illcond/harness/report.hpp"
#include "illcond/models/conditioning.hpp"
#include "illcond/models/io.hpp"
#include "illcond/spectral/report.hpp"

namespace illcond::harness {

using models::format_double;

void ExperimentConfig::validate() const {
  if (side < 4) throw ConfigError("side must be at least 4");
  if (train_samples == 0 || attack_samples == 0 || eval_samples == 0) {
    throw ConfigError("sample counts must be positive");
  }
  if (attacks.empty()) throw ConfigError("experiment has no [attack] sections");
  for (const auto& s : attacks) {
    if (s.eps_grid.empty()) throw ConfigError("attack section has an empty eps grid");
    if (s.defended.empty()) throw ConfigError("attack section has no defense setting");
    for (double e : s.eps_grid) {
      attacks::AttackConfig c = s.base;
      c.eps = e;
      c.validate();
    }
  }
  if (!(inject_floor > 0.0)) throw ConfigError("inject_floor must be positive");
  if (hist_bins == 0 || !(hist_lo < hist_hi)) throw ConfigError("bad histogram range");
  hmc.validate();
  if (model_path && !std::filesystem::exists(*model_path) && train.epochs == 0) {
    throw ConfigError(model_path->string() + ": model file missing and no training recipe");
  }
  if (image_dir && !std::filesystem::is_directory(*image_dir)) {
    throw ConfigError(image_dir->string() + ": not a directory");
  }
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

struct ValueParser {
  std::size_t offset;

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, offset); }

  double number(std::string_view v) const {
    std::string s(v);
    char* end = nullptr;
    const double out = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) fail("expected a number, got '" + s + "'");
    return out;
  }

  std::uint64_t integer(std::string_view v) const {
    std::string s(v);
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      fail("expected a non-negative integer, got '" + s + "'");
    }
    try {
      return std::stoull(s);
    } catch (const std::out_of_range&) {
      fail("integer out of range: '" + s + "'");
    }
  }

  bool boolean(std::string_view v) const {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    fail("expected a boolean, got '" + std::string(v) + "'");
  }

  std::vector<std::string_view> list(std::string_view v) const {
    std::vector<std::string_view> out;
    while (true) {
      const auto comma = v.find(',');
      out.push_back(trim(v.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      v.remove_prefix(comma + 1);
    }
    return out;
  }

  template <class F>
  auto wrap(F&& f) const {
    try {
      return f();
    } catch (const ConfigError& e) {
      fail(e.what());
    }
  }
};

void set_global(ExperimentConfig& c, std::string_view key, std::string_view v, const ValueParser& p) {
  if (key == "seed") c.seed = p.integer(v);
  else if (key == "out") c.out = std::string(v);
  else if (key == "model") c.model_path = std::string(v);
  else if (key == "train_epochs") c.train.epochs = p.integer(v);
  else if (key == "train_lr") c.train.lr = p.number(v);
  else if (key == "train_batch") c.train.batch = p.integer(v);
  else if (key == "image_dir") c.image_dir = std::string(v);
  else if (key == "side") c.side = p.integer(v);
  else if (key == "train_samples") c.train_samples = p.integer(v);
  else if (key == "attack_samples") c.attack_samples = p.integer(v);
  else if (key == "eval_samples") c.eval_samples = p.integer(v);
  else if (key == "inject_layers") {
    c.inject_layers.clear();
    for (auto item : p.list(v)) c.inject_layers.push_back(p.integer(item));
  } else if (key == "inject_floor") c.inject_floor = p.number(v);
  else if (key == "inject_count") c.inject_count = p.integer(v);
  else if (key == "hmc_leapfrog_steps") c.hmc.leapfrog_steps = p.integer(v);
  else if (key == "hmc_step_size") c.hmc.step_size = p.number(v);
  else if (key == "hmc_chain_length") c.hmc.chain_length = p.integer(v);
  else if (key == "hmc_noise_scale") c.hmc.noise_scale = p.number(v);
  else if (key == "hist_bins") c.hist_bins = p.integer(v);
  else if (key == "hist_lo") c.hist_lo = p.number(v);
  else if (key == "hist_hi") c.hist_hi = p.number(v);
  else p.fail("unknown key '" + std::string(key) + "'");
}

void set_attack(AttackSection& s, std::string_view key, std::string_view v, const ValueParser& p) {
  auto& a = s.base;
  if (key == "strategy") a.strategy = p.wrap([&] { return attacks::parse_strategy(v); });
  else if (key == "distance") a.distance = p.wrap([&] { return distances::parse_distance(v); });
  else if (key == "eps") {
    s.eps_grid.clear();
    for (auto item : p.list(v)) s.eps_grid.push_back(p.number(item));
  } else if (key == "norm") a.norm = p.wrap([&] { return attacks::parse_norm(v); });
  else if (key == "steps") a.steps = p.integer(v);
  else if (key == "lr") a.lr = p.number(v);
  else if (key == "batch") a.batch = p.integer(v);
  else if (key == "seed") a.seed = p.integer(v);
  else if (key == "init_scale") a.init_scale = p.number(v);
  else if (key == "layer_fraction") a.layer_fraction = p.number(v);
  else if (key == "weighting") a.weighting = p.wrap([&] { return attacks::parse_weighting(v); });
  else if (key == "reservoir") a.reservoir = p.integer(v);
  else if (key == "defended") {
    if (v == "both") s.defended = {false, true};
    else s.defended = {p.boolean(v)};
  } else p.fail("unknown attack key '" + std::string(key) + "'");
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view text) {
  ExperimentConfig c;
  // Attack sections inherit the global seed unless they set their own.
  std::vector<bool> seeded;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    const ValueParser p{pos};
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) {
      if (line.front() == '[') {
        if (line != "[attack]") p.fail("unknown section " + std::string(line));
        c.attacks.emplace_back();
        seeded.push_back(false);
      } else {
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) p.fail("expected 'key = value'");
        const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty()) p.fail("empty key");
        if (c.attacks.empty()) {
          set_global(c, key, value, p);
        } else {
          set_attack(c.attacks.back(), key, value, p);
          if (key == "seed") seeded.back() = true;
        }
      }
    }
    pos = eol + 1;
  }
  for (std::size_t i = 0; i < c.attacks.size(); ++i) {
    if (!seeded[i]) c.attacks[i].base.seed = c.seed;
  }
  c.train.seed = c.seed;
  c.hmc.seed = c.seed;
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open config");
  std::ostringstream s;
  s << in.rdbuf();
  return parse_experiment_config(s.str());
}

std::vector<RowSpec> expand_rows(const ExperimentConfig& config) {
  std::vector<RowSpec> rows;
  for (const auto& s : config.attacks) {
    for (double e : s.eps_grid) {
      for (bool d : s.defended) {
        RowSpec r{s.base, d};
        r.attack.eps = e;
        rows.push_back(r);
      }
    }
  }
  return rows;
}

bool ExperimentResult::all_ok() const {
  return std::all_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.ok; });
}

std::string row_stem(std::size_t index, const RowSpec& spec) {
  char num[16];
  std::snprintf(num, sizeof num, "row%03zu", index);
  std::string s = std::string(num) + "_" + std::string(attacks::strategy_name(spec.attack.strategy)) + "-" +
                  std::string(distances::distance_name(spec.attack.distance)) + "-eps" +
                  format_double(spec.attack.eps);
  if (spec.defended) s += "-defended";
  return s;
}

std::size_t row_threads() {
  if (const char* env = std::getenv("ILLCOND_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

Tensor first_rows(const Tensor& data, std::size_t n) {
  n = std::min(n, data.rows());
  const std::size_t d = data.cols();
  std::vector<double> v(data.values().begin(), data.values().begin() + static_cast<std::ptrdiff_t>(n * d));
  return Tensor::matrix(n, d, std::move(v));
}

}  // namespace

ExperimentData load_experiment_data(const ExperimentConfig& c) {
  if (c.image_dir) {
    Tensor all = load_image_dir(*c.image_dir, c.side);
    return {first_rows(all, c.train_samples), first_rows(all, c.attack_samples), first_rows(all, c.eval_samples)};
  }
  return {generate_synthetic_dataset(c.seed, c.train_samples, c.side),
          generate_synthetic_dataset(c.seed + 1, c.attack_samples, c.side),
          generate_synthetic_dataset(c.seed + 2, c.eval_samples, c.side)};
}

models::AutoencoderModel prepare_model(const ExperimentConfig& c, const Tensor& train_set) {
  models::AutoencoderModel model;
  if (c.model_path && std::filesystem::exists(*c.model_path)) {
    model = models::load_model(*c.model_path);
  } else {
    models::Topology topo = models::default_topology();
    topo.widths.front() = topo.widths.back() = c.side * c.side;
    models::TrainConfig tc = c.train;
    tc.seed = c.seed;
    model = models::train(models::make_autoencoder(topo, c.seed), train_set, tc).model;
    models::save_model(model, c.model_path.value_or(c.out / "model.txt"));
  }
  for (std::size_t layer : c.inject_layers) {
    model = models::inject_ill_conditioning(model, layer, c.inject_floor, c.inject_count);
  }
  return model;
}

namespace {

std::string csv_number(double v) { return format_double(v); }

void write_row_files(const std::filesystem::path& out, const std::string& stem, const ExperimentConfig& c,
                     const ResultRow& row, const attacks::AttackResult& attack) {
  std::string per = csv_row({"sample", "distortion"});
  for (std::size_t i = 0; i < row.per_sample.size(); ++i) {
    per += csv_row({std::to_string(i), csv_number(row.per_sample[i])});
  }
  atomic_write(out / (stem + "_per_sample.csv"), per);

  const auto& t = attack.trace;
  std::string conv = csv_row({"epoch", "objective", "distortion", "rho_norm"});
  for (std::size_t e = 0; e < t.objective.size(); ++e) {
    conv += csv_row({std::to_string(e), csv_number(t.objective[e]), csv_number(t.distortion[e]),
                     csv_number(t.rho_norm[e])});
  }
  atomic_write(out / (stem + "_convergence.csv"), conv);

  std::ostringstream hist;
  if (!t.gradient_samples.empty()) {
    spectral::write_histogram_csv(hist, spectral::gradient_histogram(t.gradient_samples, c.hist_bins, c.hist_lo,
                                                                      c.hist_hi));
  } else {
    hist << "bin_lo,bin_hi,count\n";
  }
  atomic_write(out / (stem + "_histogram.csv"), hist.str());

  std::string rho = csv_row({"index", "value"});
  for (std::size_t i = 0; i < attack.rho.size(); ++i) rho += csv_row({std::to_string(i), csv_number(attack.rho[i])});
  atomic_write(out / (stem + "_rho.csv"), rho);
}

ResultRow run_row(const ExperimentConfig& c, const models::AutoencoderModel& model, const ExperimentData& data,
                  const RowSpec& spec, const std::string& stem) {
  ResultRow row;
  row.spec = spec;
  const auto start = std::chrono::steady_clock::now();
  try {
    attacks::AttackResult attack;
    attacks::DistortionStats stats;
    if (spec.defended) {
      attack = defense::run_adaptive_attack(model, c.hmc, data.attack, spec.attack);
      stats = defense::evaluate_defended(model, data.eval, attack.rho, c.hmc);
    } else {
      attack = attacks::run_universal_attack(model, data.attack, spec.attack);
      stats = attacks::evaluate_attack(model, data.eval, attack.rho);
    }
    const Summary s = summarize_distribution(stats.per_sample);
    row.n = s.count;
    row.mean = s.mean;
    row.std = s.std;
    row.min = s.min;
    row.q1 = s.q1;
    row.median = s.median;
    row.q3 = s.q3;
    row.max = s.max;
    row.per_sample = std::move(stats.per_sample);
    write_row_files(c.out, stem, c, row, attack);
    row.ok = true;
  } catch (const DivergenceError& e) {
    row.error = std::string(e.what()) + " (step " + std::to_string(e.step()) + ")";
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  row.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

std::string results_csv(const std::vector<ResultRow>& rows, std::uint64_t seed) {
  std::string out = csv_row({"strategy", "distance", "eps", "norm", "defended", "layer_fraction", "weighting", "n",
                             "mean", "std", "min", "q1", "median", "q3", "max", "runtime_seconds", "seed",
                             "status"});
  for (const auto& r : rows) {
    const auto& a = r.spec.attack;
    auto stat = [&](double v) { return r.ok ? csv_number(v) : std::string(); };
    out += csv_row({std::string(attacks::strategy_name(a.strategy)), std::string(distances::distance_name(a.distance)),
                    csv_number(a.eps), std::string(attacks::norm_name(a.norm)), r.spec.defended ? "1" : "0",
                    csv_number(a.layer_fraction), std::string(attacks::weighting_name(a.weighting)),
                    std::to_string(r.n), stat(r.mean), stat(r.std), stat(r.min), stat(r.q1), stat(r.median),
                    stat(r.q3), stat(r.max), csv_number(r.runtime_seconds), std::to_string(seed),
                    r.ok ? "ok" : "error: " + r.error});
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& c) {
  c.validate();
  std::filesystem::create_directories(c.out);
  const ExperimentData data = load_experiment_data(c);
  const models::AutoencoderModel model = prepare_model(c, data.train);

  std::ostringstream spec_csv;
  spectral::write_report_csv(spec_csv, spectral::model_conditioning_report(model));
  atomic_write(c.out / "spectral.csv", spec_csv.str());

  const std::vector<RowSpec> specs = expand_rows(c);
  ExperimentResult result;
  result.rows.resize(specs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      result.rows[i] = run_row(c, model, data, specs[i], row_stem(i, specs[i]));
    }
  };
  const std::size_t workers = std::min(row_threads(), specs.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  atomic_write(c.out / "results.csv", results_csv(result.rows, c.seed));

  std::vector<BoxplotSeries> series;
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& r = result.rows[i];
    if (!r.ok || r.per_sample.empty()) continue;
    std::string label = std::string(attacks::strategy_name(r.spec.attack.strategy)) + "-" +
                        std::string(distances::distance_name(r.spec.attack.distance)) + " " +
                        format_double(r.spec.attack.eps);
    if (r.spec.defended) label += " D";
    series.push_back({label, r.per_sample});
  }
  if (!series.empty()) emit_boxplot_svg(series, c.out / "boxplot.svg");
  return result;
}

}  // namespace illcond::harness
