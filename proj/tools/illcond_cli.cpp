#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "illcond/errors.hpp"
#include "illcond/harness/experiment.hpp"
#include "illcond/harness/report.hpp"
#include "illcond/models/io.hpp"
#include "illcond/spectral/report.hpp"

using namespace illcond;
using namespace illcond::harness;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::optional<std::string> config, out, model, strategy, distance, norm, weighting, rho, image_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> eps, lr, layer_fraction;
  std::optional<std::size_t> steps, samples, epochs, batch;
  bool defended = false;
};

void shared_flags(CLI::App* app, Options& o) {
  app->add_option("--config", o.config, "Experiment config file");
  app->add_option("--seed", o.seed, "Global seed");
  app->add_option("--out", o.out, "Output directory");
  app->add_option("--model", o.model, "Model file");
  app->add_option("--strategy", o.strategy, "oa, la, lgr, grill or grill-sum")
      ->check(CLI::IsMember({"oa", "la", "lgr", "grill", "grill-sum"}));
  app->add_option("--distance", o.distance, "l2, cos or wass")->check(CLI::IsMember({"l2", "cos", "wass"}));
  app->add_option("--eps", o.eps, "Perturbation budget");
  app->add_option("--norm", o.norm, "inf or l2")->check(CLI::IsMember({"inf", "l2"}));
  app->add_option("--steps", o.steps, "Attack epochs");
  app->add_option("--lr", o.lr, "Step size");
  app->add_flag("--defended", o.defended, "Attack or evaluate through the HMC defense");
  app->add_option("--layer-fraction", o.layer_fraction, "Fraction of layer splits used by GRILL");
  app->add_option("--weighting", o.weighting, "equal, random or invkappa")
      ->check(CLI::IsMember({"equal", "random", "invkappa"}));
  app->add_option("--samples", o.samples, "Number of samples for this verb");
  app->add_option("--batch", o.batch, "Batch size");
  app->add_option("--image-dir", o.image_dir, "Directory of PGM images instead of synthetic data");
}

ExperimentConfig base_config(const Options& o) {
  ExperimentConfig c = o.config ? load_experiment_config(*o.config) : ExperimentConfig{};
  if (c.attacks.empty()) {
    c.attacks.emplace_back();
    c.attacks[0].base.seed = c.seed;
  }
  if (o.seed) {
    c.seed = *o.seed;
    c.train.seed = c.hmc.seed = *o.seed;
    for (auto& a : c.attacks) a.base.seed = *o.seed;
  }
  if (o.out) c.out = *o.out;
  if (o.model) c.model_path = fs::path(*o.model);
  if (o.image_dir) c.image_dir = fs::path(*o.image_dir);
  if (o.epochs) c.train.epochs = *o.epochs;
  auto& a = c.attacks.front().base;
  if (o.strategy) a.strategy = attacks::parse_strategy(*o.strategy);
  if (o.distance) a.distance = distances::parse_distance(*o.distance);
  if (o.eps) a.eps = *o.eps;
  if (o.norm) a.norm = attacks::parse_norm(*o.norm);
  if (o.steps) a.steps = *o.steps;
  if (o.lr) a.lr = *o.lr;
  if (o.layer_fraction) a.layer_fraction = *o.layer_fraction;
  if (o.weighting) a.weighting = attacks::parse_weighting(*o.weighting);
  if (o.batch) a.batch = *o.batch;
  return c;
}

fs::path model_file(const ExperimentConfig& c) { return c.model_path.value_or(c.out / "model.txt"); }

models::AutoencoderModel require_model(ExperimentConfig c) {
  c.model_path = model_file(c);
  if (!fs::exists(*c.model_path)) throw ConfigError(c.model_path->string() + ": no such model (run `train` first)");
  return prepare_model(c, Tensor());
}

std::string vector_csv(const std::string& name, const std::vector<double>& v) {
  std::string out = csv_row({"index", name});
  for (std::size_t i = 0; i < v.size(); ++i) out += csv_row({std::to_string(i), models::format_double(v[i])});
  return out;
}

Tensor read_rho(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open perturbation");
  std::string line;
  std::getline(in, line);
  std::vector<double> v;
  while (std::getline(in, line)) {
    auto f = parse_csv_row(line);
    if (f.size() != 2) throw ConfigError(path.string() + ": expected index,value rows");
    v.push_back(std::stod(f[1]));
  }
  const std::size_t n = v.size();
  return Tensor(diffcore::Shape{n}, std::move(v));
}

int cmd_train(const Options& o) {
  ExperimentConfig c = base_config(o);
  if (o.samples) c.train_samples = *o.samples;
  if (o.lr) c.train.lr = *o.lr;
  if (o.batch) c.train.batch = *o.batch;
  const Tensor data = load_experiment_data(c).train;
  models::Topology topo = models::default_topology();
  topo.widths.front() = topo.widths.back() = c.side * c.side;
  auto result = models::train(models::make_autoencoder(topo, c.seed), data, c.train);
  fs::create_directories(c.out);
  models::save_model(result.model, model_file(c));
  atomic_write(c.out / "train_loss.csv", vector_csv("loss", result.loss_curve));
  std::cout << "trained " << result.loss_curve.size() << " epochs, final loss "
            << (result.loss_curve.empty() ? 0.0 : result.loss_curve.back()) << ", saved " << model_file(c).string()
            << "\n";
  return 0;
}

int cmd_attack(const Options& o) {
  ExperimentConfig c = base_config(o);
  if (o.samples) c.attack_samples = *o.samples;
  const auto model = require_model(c);
  const auto data = load_experiment_data(c);
  const auto& cfg = c.attacks.front().base;
  auto result = o.defended ? defense::run_adaptive_attack(model, c.hmc, data.attack, cfg)
                           : attacks::run_universal_attack(model, data.attack, cfg);
  fs::create_directories(c.out);
  atomic_write(c.out / "rho.csv", vector_csv("value", {result.rho.values().begin(), result.rho.values().end()}));
  std::string conv = csv_row({"epoch", "objective", "distortion", "rho_norm"});
  const auto& t = result.trace;
  for (std::size_t e = 0; e < t.objective.size(); ++e) {
    conv += csv_row({std::to_string(e), models::format_double(t.objective[e]), models::format_double(t.distortion[e]),
                     models::format_double(t.rho_norm[e])});
  }
  atomic_write(c.out / "convergence.csv", conv);
  std::cout << attacks::strategy_name(cfg.strategy) << "-" << distances::distance_name(cfg.distance)
            << " eps=" << cfg.eps << " ||rho||=" << attacks::norm_of(result.rho, cfg.norm) << "\n";
  return 0;
}

int cmd_evaluate(const Options& o) {
  ExperimentConfig c = base_config(o);
  if (o.samples) c.eval_samples = *o.samples;
  const auto model = require_model(c);
  const Tensor rho = read_rho(o.rho ? fs::path(*o.rho) : c.out / "rho.csv");
  const Tensor data = load_experiment_data(c).eval;
  auto stats = o.defended ? defense::evaluate_defended(model, data, rho, c.hmc)
                          : attacks::evaluate_attack(model, data, rho);
  const Summary s = summarize_distribution(stats.per_sample);
  fs::create_directories(c.out);
  atomic_write(c.out / "per_sample.csv", vector_csv("distortion", stats.per_sample));
  std::cout << "n=" << s.count << " mean=" << s.mean << " std=" << s.std << " median=" << s.median << "\n";
  return 0;
}

int cmd_spectral(const Options& o) {
  ExperimentConfig c = base_config(o);
  const auto model = require_model(c);
  std::ostringstream csv;
  spectral::write_report_csv(csv, spectral::model_conditioning_report(model));
  atomic_write(c.out / "spectral.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

int cmd_experiment(const Options& o) {
  if (!o.config) throw ConfigError("experiment needs --config");
  const ExperimentConfig c = base_config(o);
  const auto result = run_experiment(c);
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& r = result.rows[i];
    std::cout << row_stem(i, r.spec) << ": ";
    if (r.ok) std::cout << "mean " << r.mean << " std " << r.std << "\n";
    else std::cout << "FAILED " << r.error << "\n";
  }
  return result.all_ok() ? 0 : 1;
}

int cmd_plot(const Options& o) {
  const fs::path dir = o.out ? fs::path(*o.out) : fs::path("results");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    const std::string suffix = "per_sample.csv";
    if (name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      files.push_back(e.path());
    }
  }
  if (files.empty()) throw ConfigError(dir.string() + ": no per-sample distortion files");
  std::sort(files.begin(), files.end());
  std::vector<BoxplotSeries> series;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string line;
    std::getline(in, line);
    BoxplotSeries s;
    s.label = f.filename().string();
    s.label = s.label.substr(0, s.label.size() - std::string("per_sample.csv").size());
    if (!s.label.empty() && s.label.back() == '_') s.label.pop_back();
    if (s.label.empty()) s.label = "distortion";
    if (s.label.rfind("row", 0) == 0 && s.label.find('_') != std::string::npos) {
      s.label = s.label.substr(s.label.find('_') + 1);
    }
    while (std::getline(in, line)) s.values.push_back(std::stod(parse_csv_row(line).at(1)));
    series.push_back(std::move(s));
  }
  emit_boxplot_svg(series, dir / "boxplot.svg");
  std::cout << "wrote " << (dir / "boxplot.svg").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial robustness toolkit for small autoencoders"};
  app.require_subcommand(1);
  Options o;
  struct Verb {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Verb verbs[] = {
      {"train", "Train the default autoencoder on the configured dataset", cmd_train},
      {"attack", "Optimize a universal perturbation", cmd_attack},
      {"evaluate", "Measure output distortion of a perturbation", cmd_evaluate},
      {"spectral", "Per-layer conditioning report", cmd_spectral},
      {"experiment", "Run a full experiment matrix from a config file", cmd_experiment},
      {"plot", "Box plot of every per-sample distortion file in --out", cmd_plot},
  };
  std::vector<std::pair<CLI::App*, const Verb*>> subs;
  for (const auto& v : verbs) {
    CLI::App* sub = app.add_subcommand(v.name, v.help);
    shared_flags(sub, o);
    if (std::string(v.name) == "train") sub->add_option("--epochs", o.epochs, "Training epochs");
    if (std::string(v.name) == "evaluate") sub->add_option("--rho", o.rho, "Perturbation CSV (default OUT/rho.csv)");
    subs.emplace_back(sub, &v);
  }
  CLI11_PARSE(app, argc, argv);
  try {
    for (auto [sub, verb] : subs) {
      if (sub->parsed()) return verb->run(o);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
