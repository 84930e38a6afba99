#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "illcond/diffcore/finite_diff.hpp"
#include "illcond/diffcore/graph.hpp"
#include "illcond/errors.hpp"

using namespace illcond;
using namespace illcond::diffcore;

namespace {

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

// Pushes x away from a kink at 0 so central differences stay one-sided.
Tensor away_from_zero(Tensor t, double margin) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (std::abs(t[i]) < margin) t[i] = t[i] < 0 ? -margin : margin;
  return t;
}

using Builder = std::function<Var(Graph&, Var)>;

// Scalarizes op(x) with fixed random weights and compares backward against
// central differences.
double gradient_error(const Builder& op, const Tensor& x, const Tensor& weights) {
  auto scalar = [&](Graph& g, Var xv) {
    Var y = op(g, xv);
    return dot(reshape(y, Shape{shape_size(y.shape())}), g.constant(weights));
  };
  Graph g;
  Var xv = g.variable(x);
  Var root = scalar(g, xv);
  g.evaluate(root);
  Tensor analytic = g.backward(root)[xv];
  Tensor numeric = finite_diff_gradient(
      [&](const Tensor& p) {
        Graph h;
        Var r = scalar(h, h.variable(p));
        return h.evaluate(r).item();
      },
      x, 1e-5);
  return relative_error(analytic, numeric);
}

struct PrimitiveCase {
  const char* name;
  Shape in_shape;
  std::size_t out_size;
  Builder op;
  double lo = -1.0, hi = 1.0;
  double kink_margin = 0.0;
};

}  // namespace

TEST(Evaluate, MatmulHandArithmetic) {
  Graph g;
  Var a = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  Var b = g.constant(Tensor::matrix({{1}, {1}}));
  EXPECT_EQ(g.evaluate(matmul(a, b)), Tensor::matrix({{3}, {7}}));
}

TEST(Evaluate, ReluDefinition) {
  Graph g;
  Var r = relu(g.constant(Tensor::vector({-1, 0, 2})));
  EXPECT_EQ(g.evaluate(r), Tensor::vector({0, 0, 2}));
}

TEST(Evaluate, SquaredNorm) {
  Graph g;
  EXPECT_EQ(g.evaluate(squared_norm(g.constant(Tensor::vector({3, 4})))).item(), 25.0);
}

TEST(Evaluate, ShapeMismatchNamesBothShapes) {
  Graph g;
  Var a = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  Var b = g.constant(Tensor::matrix({{1, 2, 3}}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 2]"), std::string::npos);
    EXPECT_NE(msg.find("[1, 3]"), std::string::npos);
  }
  EXPECT_THROW(add(a, b), ShapeError);
}

TEST(Evaluate, NonFiniteIntermediateIdentifiesNode) {
  Graph g;
  Var x = g.constant(Tensor::vector({-1.0}));
  Var l = log(x);
  try {
    g.evaluate(l);
    FAIL() << "expected EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("node " + std::to_string(l.id)), std::string::npos);
  }
}

TEST(Evaluate, Deterministic) {
  std::mt19937_64 rng(7);
  Tensor a = random_tensor(rng, {5, 6}), b = random_tensor(rng, {6, 3});
  auto run = [&] {
    Graph g;
    Var out = tanh(matmul(g.constant(a), g.constant(b)));
    return g.evaluate(sum(sort_ascending(out)));
  };
  EXPECT_EQ(run(), run());
}

TEST(Tensor, RejectsBadConstruction) {
  EXPECT_THROW(Tensor(Shape{2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor(Shape{0}, {}), ShapeError);
  EXPECT_THROW(Tensor::vector({1.0, NAN}), EvaluationError);
}

TEST(Backward, SquaredNormGradient) {
  Graph g;
  Var x = g.variable(Tensor::vector({3, 4}));
  Var y = squared_norm(x);
  g.evaluate(y);
  EXPECT_EQ(g.backward(y)[x], Tensor::vector({6, 8}));
}

TEST(Backward, TanhAtZero) {
  Graph g;
  Var x = g.variable(Tensor::scalar(0.0));
  Var y = tanh(x);
  g.evaluate(y);
  EXPECT_DOUBLE_EQ(g.backward(y)[x].item(), 1.0);
}

TEST(Backward, ProductRuleMatchesFiniteDifferences) {
  // f = ||x||^2, g = sum(x), d(f g)/dx = 2x sum(x) + ||x||^2. At (1, 2): (11, 17).
  auto f = [](Graph& g, Var x) { return squared_norm(x) * sum(x); };
  Graph g;
  Var x = g.variable(Tensor::vector({1, 2}));
  Var y = f(g, x);
  g.evaluate(y);
  Tensor analytic = g.backward(y)[x];
  Tensor numeric = finite_diff_gradient(
      [&](const Tensor& p) {
        Graph h;
        return h.evaluate(f(h, h.variable(p))).item();
      },
      Tensor::vector({1, 2}), 1e-5);
  EXPECT_LT(relative_error(analytic, numeric), 1e-8);
  EXPECT_NEAR(analytic[0], 11.0, 1e-12);
  EXPECT_NEAR(analytic[1], 17.0, 1e-12);
}

TEST(Backward, BeforeEvaluateIsStateError) {
  Graph g;
  Var x = g.variable(Tensor::vector({1, 2}));
  Var y = sum(x);
  EXPECT_THROW(g.backward(y), StateError);
}

TEST(Backward, FanOutAccumulatesAdditively) {
  std::mt19937_64 rng(3);
  Tensor x0 = random_tensor(rng, {4});
  // Shared leaf used three times.
  Graph g1;
  Var x = g1.variable(x0);
  Var y1 = dot(tanh(x), x) + squared_norm(x);
  g1.evaluate(y1);
  Tensor shared = g1.backward(y1)[x];
  // Same expression with three distinct copies; their gradients must sum to the shared one.
  Graph g2;
  Var a = g2.variable(x0), b = g2.variable(x0), c = g2.variable(x0);
  Var y2 = dot(tanh(a), b) + squared_norm(c);
  g2.evaluate(y2);
  auto grads = g2.backward(y2);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    EXPECT_NEAR(shared[i], grads[a][i] + grads[b][i] + grads[c][i], 1e-14);
  }
}

TEST(Backward, UnreachedVariableGetsZeroGradient) {
  Graph g;
  Var x = g.variable(Tensor::vector({1, 2}));
  Var unused = g.variable(Tensor::vector({5}));
  Var y = sum(x);
  g.evaluate(y);
  auto grads = g.backward(y);
  EXPECT_EQ(grads[unused], Tensor::vector({0}));
}

TEST(Backward, ReluKinkUsesZeroSubgradient) {
  Graph g;
  Var x = g.variable(Tensor::vector({0.0, 1.0}));
  Var y = sum(relu(x));
  g.evaluate(y);
  EXPECT_EQ(g.backward(y)[x], Tensor::vector({0.0, 1.0}));
}

TEST(Backward, SortTiesAreStable) {
  Graph g;
  Var x = g.variable(Tensor::vector({2.0, 1.0, 2.0}));
  Var s = sort_ascending(x);
  Var y = dot(s, g.constant(Tensor::vector({10, 20, 30})));
  EXPECT_EQ(g.evaluate(s), Tensor::vector({1, 2, 2}));
  g.evaluate(y);
  // Sorted order is (x1, x0, x2): the first 2.0 keeps the earlier slot.
  EXPECT_EQ(g.backward(y)[x], Tensor::vector({20, 10, 30}));
}

TEST(Backward, SqrtAtZeroHasZeroAdjoint) {
  Graph g;
  Var x = g.variable(Tensor::vector({0.0, 4.0}));
  Var y = sum(sqrt(x));
  g.evaluate(y);
  EXPECT_EQ(g.backward(y)[x], Tensor::vector({0.0, 0.25}));
}

TEST(Backward, BroadcastOperandAdjointIsSummed) {
  Graph g;
  Var m = g.variable(Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
  Var r = g.variable(Tensor::vector({10, 20}));
  Var y = sum(m + r);
  g.evaluate(y);
  auto grads = g.backward(y);
  EXPECT_EQ(grads[r], Tensor::vector({3, 3}));
  EXPECT_EQ(grads[m], Tensor::filled({3, 2}, 1.0));
}

TEST(FiniteDiff, SquareAtThree) {
  Tensor grad = finite_diff_gradient([](const Tensor& x) { return x[0] * x[0]; }, Tensor::vector({3.0}), 1e-5);
  EXPECT_NEAR(grad[0], 6.0, 1e-6);
}

TEST(FiniteDiff, ConstantIsZero) {
  Tensor grad = finite_diff_gradient([](const Tensor&) { return 4.2; }, Tensor::vector({1, 2, 3}), 1e-5);
  EXPECT_EQ(grad, Tensor::zeros({3}));
}

TEST(FiniteDiff, RejectsBadStepAndNonFinite) {
  auto f = [](const Tensor& x) { return x[0]; };
  EXPECT_THROW(finite_diff_gradient(f, Tensor::vector({1}), 0.0), ConfigError);
  auto bad = [](const Tensor& x) { return std::log(x[0]); };
  EXPECT_THROW(finite_diff_gradient(bad, Tensor::vector({0.0}), 1e-5), EvaluationError);
}

// Each primitive against central differences at 100 random points.
TEST(GradientCheck, EveryPrimitiveAtRandomPoints) {
  std::mt19937_64 rng(2024);
  const Tensor mat = random_tensor(rng, {4, 3});
  const Tensor row = random_tensor(rng, {3});
  const Tensor positive = random_tensor(rng, {2, 3}, 0.5, 2.0);

  std::vector<PrimitiveCase> cases = {
      {"matmul_left", {2, 4}, 6, [&](Graph& g, Var x) { return matmul(x, g.constant(mat)); }},
      {"matmul_right", {4, 3}, 9,
       [&](Graph& g, Var x) { return matmul(g.constant(Tensor::matrix({{1, 2, 3, 4}, {0, -1, 2, 1}, {3, 0, 1, 1}})), x); }},
      {"add", {2, 3}, 6, [&](Graph& g, Var x) { return x + g.constant(row); }},
      {"add_broadcast", {3}, 6, [&](Graph& g, Var x) { return g.constant(positive) + x; }},
      {"subtract", {2, 3}, 6, [&](Graph& g, Var x) { return g.constant(positive) - x; }},
      {"scale", {5}, 5, [](Graph&, Var x) { return scale(x, -2.5); }},
      {"multiply", {2, 3}, 6, [&](Graph& g, Var x) { return x * (x + g.constant(row)); }},
      {"divide_num", {2, 3}, 6, [&](Graph& g, Var x) { return x / g.constant(positive); }},
      {"divide_den", {2, 3}, 6, [&](Graph& g, Var x) { return g.constant(positive) / x; }, 0.5, 2.0},
      {"relu", {6}, 6, [](Graph&, Var x) { return relu(x); }, -1.0, 1.0, 1e-3},
      {"tanh", {6}, 6, [](Graph&, Var x) { return tanh(x); }},
      {"sigmoid", {6}, 6, [](Graph&, Var x) { return sigmoid(x); }},
      {"exp", {6}, 6, [](Graph&, Var x) { return exp(x); }},
      {"log", {6}, 6, [](Graph&, Var x) { return log(x); }, 0.2, 2.0},
      {"sqrt", {6}, 6, [](Graph&, Var x) { return sqrt(x); }, 0.2, 2.0},
      {"sum", {2, 3}, 1, [](Graph&, Var x) { return reshape(sum(x), Shape{1}); }},
      {"row_sum", {3, 4}, 3, [](Graph&, Var x) { return row_sum(x); }},
      {"squared_norm", {5}, 1, [](Graph&, Var x) { return reshape(squared_norm(x), Shape{1}); }},
      {"dot", {3}, 1, [&](Graph& g, Var x) { return reshape(dot(x, x * g.constant(row)), Shape{1}); }},
      {"sort", {2, 5}, 10, [](Graph&, Var x) { return sort_ascending(x); }},
      {"reshape", {2, 3}, 6, [](Graph&, Var x) { return reshape(x, Shape{3, 2}); }},
  };

  for (const auto& c : cases) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      Tensor x = random_tensor(rng, c.in_shape, c.lo, c.hi);
      if (c.kink_margin > 0.0) x = away_from_zero(x, c.kink_margin);
      Tensor w = random_tensor(rng, {c.out_size});
      worst = std::max(worst, gradient_error(c.op, x, w));
    }
    EXPECT_LT(worst, 1e-4) << c.name;
  }
}

TEST(GradientCheck, SortKinkTestedOneSided) {
  // Near a tie the sorted order flips; a one-sided difference on the stable
  // side agrees with the recorded permutation.
  Graph g;
  Var x = g.variable(Tensor::vector({1.0, 1.0 + 1e-3}));
  Var y = dot(sort_ascending(x), g.constant(Tensor::vector({1.0, 3.0})));
  g.evaluate(y);
  Tensor grad = g.backward(y)[x];
  EXPECT_EQ(grad, Tensor::vector({1.0, 3.0}));
}
