#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "illcond/errors.hpp"
#include "illcond/models/conditioning.hpp"
#include "illcond/spectral/report.hpp"

using namespace illcond;
using namespace illcond::spectral;
using namespace illcond::models;
using diffcore::Shape;

TEST(Report, IdentityModelIsPerfectlyConditioned) {
  AutoencoderModel m;
  for (int i = 0; i < 3; ++i) {
    m.layers.push_back({Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}), Tensor::zeros(Shape{3}),
                        Activation::identity});
  }
  m.latent_index = 1;
  auto r = model_conditioning_report(m);
  ASSERT_EQ(r.size(), 3u);
  for (const auto& e : r) {
    EXPECT_FALSE(e.extremes.kappa_infinite);
    EXPECT_NEAR(e.extremes.kappa, 1.0, 1e-14);
  }
}

TEST(Report, LengthAndInjectedFloor) {
  AutoencoderModel m = make_autoencoder(default_topology(), 3);
  // Layer 4 is 128 x 32: full column rank, so kappa is finite.
  AutoencoderModel ill = inject_ill_conditioning(m, 4, 1e-6, 1);
  auto r = model_conditioning_report(ill);
  EXPECT_EQ(r.size(), m.layer_count());
  const auto& e = r[4].extremes;
  ASSERT_FALSE(e.kappa_infinite);
  EXPECT_NEAR(e.sigma_min, 1e-6, 1e-12);
  EXPECT_NEAR(e.kappa, e.sigma_max / 1e-6, 1e-6 * e.kappa);
  // Encoder layers reduce dimension: rank < columns.
  EXPECT_TRUE(r[0].extremes.kappa_infinite);
}

TEST(Report, CsvColumns) {
  AutoencoderModel m = make_autoencoder(default_topology(), 3);
  std::ostringstream out;
  write_report_csv(out, model_conditioning_report(m));
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "layer_index,rows,cols,sigma_max,sigma_min,kappa,kappa_infinite_flag");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 10), "0,128,256,");
  EXPECT_NE(line.find(",inf,1"), std::string::npos);
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 6);
}

TEST(Histogram, AllZeroIsDegenerateSpike) {
  std::vector<double> zeros(100, 0.0);
  auto h = gradient_histogram(zeros, 11, -1.0, 1.0);
  EXPECT_TRUE(h.degenerate);
  EXPECT_EQ(h.counts[5], 100u);
  EXPECT_EQ(h.sample_count, 100u);
}

TEST(Histogram, NormalSamplesHaveZeroExcessKurtosis) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> s(100000);
  for (double& v : s) v = n(rng);
  auto h = gradient_histogram(s, 50, -3.0, 3.0);
  EXPECT_NEAR(h.excess_kurtosis, 0.0, 0.1);
  std::size_t total = h.underflow + h.overflow;
  for (auto c : h.counts) total += c;
  EXPECT_EQ(total, h.sample_count);
  EXPECT_GT(h.underflow, 0u);
  EXPECT_GT(h.overflow, 0u);
  for (std::size_t i = 1; i < h.edges.size(); ++i) EXPECT_LT(h.edges[i - 1], h.edges[i]);
}

TEST(Histogram, UniformSamplesKurtosis) {
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> s(100000);
  for (double& v : s) v = u(rng);
  EXPECT_NEAR(gradient_histogram(s, 20, -1.0, 1.0).excess_kurtosis, -1.2, 0.1);
}

TEST(Histogram, HandComputedKurtosis) {
  // {-1, 1, -1, 1}: m2 = 1, m4 = 1 -> 1 - 3 = -2.
  std::vector<double> s{-1, 1, -1, 1};
  EXPECT_DOUBLE_EQ(excess_kurtosis(s), -2.0);
}

TEST(Histogram, EmptyIsError) {
  std::vector<double> none;
  EXPECT_THROW(gradient_histogram(none, 10, -1, 1), ConfigError);
}
