#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "illcond/attacks/attacks.hpp"
#include "illcond/diffcore/finite_diff.hpp"
#include "illcond/errors.hpp"
#include "illcond/spectral/svd.hpp"

using namespace illcond;
using namespace illcond::attacks;
using diffcore::Shape;
using models::Activation;
using models::LayerSpec;

namespace {

const DistanceKind kDistances[] = {DistanceKind::l2, DistanceKind::cosine, DistanceKind::wasserstein};
const Strategy kStrategies[] = {Strategy::oa, Strategy::la, Strategy::lgr, Strategy::grill, Strategy::grill_sum};

AutoencoderModel linear_ae() {
  AutoencoderModel m;
  m.layers.push_back({Tensor::matrix({{1, 0}}), Tensor::vector({0}), Activation::identity});
  m.layers.push_back({Tensor::matrix({{1}, {0}}), Tensor::vector({0, 0}), Activation::identity});
  m.latent_index = 1;
  return m;
}

AutoencoderModel chain(std::vector<Tensor> weights, std::size_t latent) {
  AutoencoderModel m;
  for (auto& w : weights) {
    const std::size_t out = w.rows();
    m.layers.push_back({std::move(w), Tensor::zeros(Shape{out}), Activation::identity});
  }
  m.latent_index = latent;
  return m;
}

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(diffcore::shape_size(shape));
  for (double& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

AutoencoderModel small_random_model(std::uint64_t seed) {
  models::Topology t{{6, 5, 3, 5, 6},
                     {Activation::tanh, Activation::identity, Activation::tanh, Activation::sigmoid},
                     2};
  return models::make_autoencoder(t, seed);
}

// max over box vertices of ||M rho||_2, by enumeration.
double box_vertex_optimum(const Eigen::MatrixXd& m, double eps) {
  const auto d = m.cols();
  double best = 0.0;
  for (long mask = 0; mask < (1L << d); ++mask) {
    Eigen::VectorXd r(d);
    for (long i = 0; i < d; ++i) r(i) = (mask >> i) & 1 ? eps : -eps;
    best = std::max(best, (m * r).norm());
  }
  return best;
}

}  // namespace

TEST(Objectives, ZeroPerturbationGivesZero) {
  AutoencoderModel m = small_random_model(1);
  std::mt19937_64 rng(2);
  Tensor x = random_tensor(rng, {4, 6}, 0.1, 1.0);
  Tensor zero = Tensor::zeros(Shape{6});
  for (Strategy s : kStrategies) {
    for (DistanceKind d : kDistances) {
      AttackConfig c;
      c.strategy = s;
      c.distance = d;
      EXPECT_EQ(attack_loss(m, x, zero, c).value, 0.0) << strategy_name(s) << "/" << distances::distance_name(d);
    }
  }
}

TEST(Objectives, LinearAutoencoderHandValues) {
  const AutoencoderModel m = linear_ae();
  const Tensor x = Tensor::vector({1, 1}), rho = Tensor::vector({0.1, 0});
  EXPECT_NEAR(loss_oa(m, x, rho, DistanceKind::l2), 0.1, 1e-15);
  EXPECT_NEAR(loss_la(m, x, rho, DistanceKind::l2), 0.1, 1e-15);
  EXPECT_NEAR(loss_lgr(m, x, rho, DistanceKind::l2), 0.01, 1e-15);
  EXPECT_NEAR(loss_grill_sum(m, x, rho, DistanceKind::l2), 0.2, 1e-15);
  EXPECT_NE(loss_grill_sum(m, x, rho, DistanceKind::l2), loss_grill(m, x, rho, DistanceKind::l2));
}

TEST(Objectives, GrillWithOneSplitIsLgrBitForBit) {
  const AutoencoderModel m = linear_ae();
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    Tensor x = random_tensor(rng, {3, 2}, -1, 1), rho = random_tensor(rng, {2}, -0.2, 0.2);
    for (DistanceKind d : {DistanceKind::l2, DistanceKind::wasserstein}) {
      EXPECT_EQ(loss_grill(m, x, rho, d, 1.0), loss_lgr(m, x, rho, d));
    }
  }
}

TEST(Objectives, IdentityAutoencoderOutputDistortion) {
  AutoencoderModel m = chain({Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{1, 0}, {0, 1}})}, 1);
  Tensor x = Tensor::matrix({{0.2, 0.4}, {0.5, 0.1}, {0.9, 0.3}});
  Tensor rho = Tensor::vector({0.03, -0.04});
  EXPECT_NEAR(loss_oa(m, x, rho, DistanceKind::l2), 3 * 0.05, 1e-15);
}

TEST(Objectives, NullSpacePerturbationIsInvisibleToLatentAttack) {
  const AutoencoderModel m = linear_ae();
  EXPECT_EQ(loss_la(m, Tensor::vector({1, 1}), Tensor::vector({0, 0.3}), DistanceKind::l2), 0.0);
}

TEST(Objectives, ThreeLayerChainHandExpanded) {
  AutoencoderModel m = chain({Tensor::matrix({{2, 0}, {0, 3}}), Tensor::matrix({{1, 0}, {0, 0.5}}),
                              Tensor::matrix({{4, 0}, {0, 1}})},
                             1);
  const Tensor x = Tensor::vector({1, 1}), rho = Tensor::vector({0.1, 0.2});
  // phi_1 shift (0.2, 0.6); phi_2 shift (0.2, 0.3); output shift (0.8, 0.3).
  const double d1 = std::sqrt(0.04 + 0.36), d2 = std::sqrt(0.04 + 0.09), out = std::sqrt(0.64 + 0.09);
  EXPECT_NEAR(loss_grill(m, x, rho, DistanceKind::l2), out * (d1 + d2), 1e-14);
  EXPECT_NEAR(loss_grill_sum(m, x, rho, DistanceKind::l2), out + d1 + d2, 1e-14);
}

TEST(Objectives, LgrGradientSurvivesNearlySingularDecoder) {
  // Decoder squashes the second latent direction by 1e-8.
  AutoencoderModel m = chain({Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{1, 0}, {0, 1e-8}})}, 1);
  // x = 0 keeps x + rho exact, so the probes straddle the l2 kink symmetrically.
  const Tensor x = Tensor::vector({0.0, 0.0}), rho = Tensor::vector({0.0, 0.1});
  AttackConfig c;
  c.strategy = Strategy::lgr;
  auto lgr = attack_loss(m, x, rho, c);
  c.strategy = Strategy::oa;
  auto oa = attack_loss(m, x, rho, c);
  // d(lat * out) = out * grad(lat) + lat * grad(out) = 1e-9 * (0,1) + 0.1 * (0,1e-8).
  EXPECT_NEAR(oa.gradient[1], 1e-8, 1e-20);
  EXPECT_NEAR(lgr.gradient[1], 2e-9, 1e-20);
  c.strategy = Strategy::lgr;
  Tensor numeric = diffcore::finite_diff_gradient([&](const Tensor& p) { return attack_loss(m, x, p, c).value; },
                                                  rho, 1e-5);
  EXPECT_LT(diffcore::relative_error(lgr.gradient, numeric), 1e-4);
}

TEST(Objectives, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (Strategy s : kStrategies) {
    for (DistanceKind d : kDistances) {
      AttackConfig c;
      c.strategy = s;
      c.distance = d;
      double worst = 0.0;
      for (int trial = 0; trial < 5; ++trial) {
        AutoencoderModel m = small_random_model(100 + trial);
        Tensor x = random_tensor(rng, {3, 6}, 0.1, 1.0), rho = random_tensor(rng, {6}, -0.1, 0.1);
        auto lg = attack_loss(m, x, rho, c);
        Tensor numeric = diffcore::finite_diff_gradient(
            [&](const Tensor& p) { return attack_loss(m, x, p, c).value; }, rho, 1e-5);
        worst = std::max(worst, diffcore::relative_error(lg.gradient, numeric));
      }
      EXPECT_LT(worst, 1e-4) << strategy_name(s) << "/" << distances::distance_name(d);
    }
  }
}

TEST(Splits, NearestToLatentOutward) {
  EXPECT_EQ(select_splits(6, 3, 1.0), (std::vector<std::size_t>{3, 2, 4, 1, 5}));
  EXPECT_EQ(select_splits(6, 3, 0.3), (std::vector<std::size_t>{3, 2}));
  EXPECT_EQ(select_splits(6, 3, 0.5), (std::vector<std::size_t>{3, 2, 4}));
  EXPECT_EQ(select_splits(6, 3, 0.8), (std::vector<std::size_t>{3, 2, 4, 1}));
  EXPECT_EQ(select_splits(6, 3, 0.2), (std::vector<std::size_t>{3}));
  EXPECT_EQ(select_splits(2, 1, 1.0), (std::vector<std::size_t>{1}));
  EXPECT_THROW(select_splits(6, 3, 0.0), ConfigError);
}

TEST(Splits, Weights) {
  AutoencoderModel m = models::make_autoencoder(models::default_topology(), 1);
  auto splits = select_splits(6, 3, 1.0);
  auto eq = split_weights(m, splits, Weighting::equal, 0);
  for (double w : eq) EXPECT_EQ(w, 1.0);
  auto r1 = split_weights(m, splits, Weighting::random, 9), r2 = split_weights(m, splits, Weighting::random, 9);
  EXPECT_EQ(r1, r2);
  double total = 0;
  for (double w : r1) total += w;
  EXPECT_NEAR(total, 1.0, 1e-15);
  auto ik = split_weights(m, splits, Weighting::inverse_kappa, 0);
  for (std::size_t i = 0; i < splits.size(); ++i) {
    const auto e = spectral::svd_extremes(m.layers[splits[i] - 1].weight);
    for (std::size_t j = 0; j < splits.size(); ++j) {
      const auto f = spectral::svd_extremes(m.layers[splits[j] - 1].weight);
      EXPECT_NEAR(ik[i] / ik[j], f.ratio / e.ratio, 1e-12);
    }
  }
}

TEST(Project, Examples) {
  EXPECT_EQ(project(Tensor::vector({0.5, -0.2}), 0.3, Norm::linf), Tensor::vector({0.3, -0.2}));
  Tensor r = project(Tensor::vector({6, 8}), 5, Norm::l2);
  EXPECT_NEAR(r[0], 3.0, 1e-15);
  EXPECT_NEAR(r[1], 4.0, 1e-15);
  EXPECT_EQ(project(Tensor::vector({0.1, 0.2}), 1.0, Norm::l2), Tensor::vector({0.1, 0.2}));
  EXPECT_EQ(project(Tensor::vector({0.1, 0.2}), 1.0, Norm::linf), Tensor::vector({0.1, 0.2}));
  EXPECT_THROW(project(Tensor::vector({1}), 0.0, Norm::linf), ConfigError);
}

TEST(Project, IdempotentAndInsideBall) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 2000; ++i) {
    Tensor r = random_tensor(rng, {9}, -2, 2);
    for (Norm p : {Norm::linf, Norm::l2}) {
      Tensor once = project(r, 0.7, p);
      EXPECT_LE(norm_of(once, p), 0.7);
      EXPECT_EQ(project(once, 0.7, p), once);
    }
  }
}

TEST(Adam, FirstStepHasUnitScale) {
  AdamState s(Shape{1});
  Tensor rho = Tensor::vector({0.0});
  adam_step(s, rho, Tensor::vector({2.0}), 0.1);
  // m_hat = 2, v_hat = 4 -> 0.1 * 2 / (2 + 1e-8).
  EXPECT_NEAR(rho[0], 0.1 * 2.0 / (2.0 + 1e-8), 1e-17);
}

TEST(Adam, ZeroGradientLeavesRho) {
  AdamState s(Shape{3});
  Tensor rho = Tensor::vector({0.1, 0.2, 0.3});
  adam_step(s, rho, Tensor::zeros(Shape{3}), 0.1);
  EXPECT_EQ(rho, Tensor::vector({0.1, 0.2, 0.3}));
}

TEST(Adam, FirstUpdateIsOddInGradient) {
  AdamState a(Shape{2}), b(Shape{2});
  Tensor ra = Tensor::zeros(Shape{2}), rb = Tensor::zeros(Shape{2});
  adam_step(a, ra, Tensor::vector({0.3, -5}), 0.01);
  adam_step(b, rb, Tensor::vector({-0.3, 5}), 0.01);
  EXPECT_EQ(ra[0], -rb[0]);
  EXPECT_EQ(ra[1], -rb[1]);
}

TEST(UniversalAttack, ZeroStepsReturnsInitialization) {
  AutoencoderModel m = small_random_model(2);
  std::mt19937_64 rng(7);
  Tensor data = random_tensor(rng, {10, 6}, 0, 1);
  AttackConfig c;
  c.steps = 0;
  c.eps = 0.05;
  auto r = run_universal_attack(m, data, c);
  EXPECT_LE(diffcore::linf_norm(r.rho.values()), c.eps / 100);
  EXPECT_GT(diffcore::linf_norm(r.rho.values()), 0.0);
  EXPECT_TRUE(r.trace.objective.empty());
}

TEST(UniversalAttack, DeterministicAndBudgeted) {
  AutoencoderModel m = small_random_model(3);
  std::mt19937_64 rng(8);
  Tensor data = random_tensor(rng, {10, 6}, 0, 1);
  for (Norm p : {Norm::linf, Norm::l2}) {
    AttackConfig c;
    c.strategy = Strategy::grill;
    c.steps = 30;
    c.lr = 1e-2;
    c.batch = 4;
    c.norm = p;
    c.seed = 4;
    auto a = run_universal_attack(m, data, c), b = run_universal_attack(m, data, c);
    EXPECT_EQ(a.rho, b.rho);
    EXPECT_EQ(a.trace.objective, b.trace.objective);
    EXPECT_EQ(a.trace.gradient_samples, b.trace.gradient_samples);
    EXPECT_LE(a.trace.max_rho_norm, c.eps);
    EXPECT_EQ(a.trace.objective.size(), 30u);
    EXPECT_EQ(a.trace.gradient_seen, 30u * 3u * 6u);
  }
}

TEST(UniversalAttack, ReservoirIsBounded) {
  AutoencoderModel m = small_random_model(3);
  std::mt19937_64 rng(8);
  Tensor data = random_tensor(rng, {4, 6}, 0, 1);
  AttackConfig c;
  c.steps = 20;
  c.reservoir = 50;
  auto r = run_universal_attack(m, data, c);
  EXPECT_EQ(r.trace.gradient_samples.size(), 50u);
  EXPECT_EQ(r.trace.gradient_seen, 120u);
}

TEST(UniversalAttack, LinearBoxVertexOracle) {
  std::mt19937_64 rng(9);
  const std::size_t d = 4;
  Tensor we = random_tensor(rng, {3, d}, -1, 1), wd = random_tensor(rng, {d, 3}, -1, 1);
  AutoencoderModel m = chain({we, wd}, 1);
  Eigen::MatrixXd M = Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(wd.values().data(), d, 3) *
                      Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(we.values().data(), 3, d);
  Tensor data = random_tensor(rng, {8, d}, 0, 1);
  for (double eps : {0.05, 0.1}) {
    AttackConfig c;
    c.eps = eps;
    c.steps = 500;
    c.lr = 1e-2;
    c.batch = 8;
    auto r = run_universal_attack(m, data, c);
    const double achieved = evaluate_attack(m, data, r.rho).mean;
    EXPECT_GE(achieved, 0.95 * box_vertex_optimum(M, eps)) << eps;
  }
  EXPECT_NEAR(box_vertex_optimum(M, 0.1), 2 * box_vertex_optimum(M, 0.05), 1e-12);
}

TEST(SampleAttack, MatchesUniversalOnOneSample) {
  AutoencoderModel m = small_random_model(4);
  Tensor x = Tensor::matrix(1, 6, {0.1, 0.5, 0.3, 0.9, 0.2, 0.7});
  AttackConfig c;
  c.strategy = Strategy::lgr;
  c.steps = 25;
  c.lr = 1e-2;
  c.seed = 11;
  EXPECT_EQ(run_sample_attack(m, x, c).rho, run_universal_attack(m, x, c).rho);
  c.steps = 0;
  EXPECT_LE(diffcore::linf_norm(run_sample_attack(m, x, c).rho.values()), c.xi());
}

TEST(UniversalAttack, NonFiniteObjectiveAbortsWithStep) {
  AutoencoderModel m = chain({Tensor::matrix({{1e200, 0}, {0, 1e200}}), Tensor::matrix({{1e200, 0}, {0, 1e200}})}, 1);
  AttackConfig c;
  c.steps = 3;
  try {
    run_universal_attack(m, Tensor::matrix({{1, 1}}), c);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step(), 0u);
  }
}

TEST(Config, Validation) {
  AttackConfig c;
  c.eps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AttackConfig{};
  c.lr = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AttackConfig{};
  c.init_scale = 0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AttackConfig{};
  c.layer_fraction = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_strategy("grill-sum"), Strategy::grill_sum);
  EXPECT_EQ(parse_weighting("invkappa"), Weighting::inverse_kappa);
  EXPECT_EQ(parse_norm("inf"), Norm::linf);
  EXPECT_THROW(parse_strategy("pgd"), ConfigError);
}

TEST(Evaluate, ZeroAndIdentity) {
  AutoencoderModel m = chain({Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{1, 0}, {0, 1}})}, 1);
  Tensor data = Tensor::matrix({{0.1, 0.2}, {0.3, 0.4}});
  for (double v : evaluate_attack(m, data, Tensor::zeros(Shape{2})).per_sample) EXPECT_EQ(v, 0.0);
  for (double v : evaluate_attack(m, data, Tensor::vector({0.3, 0.4})).per_sample) EXPECT_NEAR(v, 0.5, 1e-15);
}

TEST(Evaluate, PopulationStd) {
  auto s = summarize({1, 2, 3});
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_NEAR(s.std, std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(s.std, 0.816, 5e-4);
}
