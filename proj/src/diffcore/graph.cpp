#include "illcond/diffcore/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "illcond/errors.hpp"

namespace illcond::diffcore {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Shape broadcast_shape(Op op, const Shape& a, const Shape& b) {
  if (a == b) return a;
  if (is_suffix(b, a)) return a;
  if (is_suffix(a, b)) return b;
  throw ShapeError(std::string(op_name(op)) + ": shapes " + shape_string(a) + " and " +
                   shape_string(b) + " do not broadcast");
}

// Rows/cols of a matmul operand; rank-1 is a single row.
std::pair<std::size_t, std::size_t> matrix_dims(const Shape& s) {
  if (s.size() == 1) return {1, s[0]};
  return {s[0], s[1]};
}

std::size_t last_extent(const Shape& s) { return s.empty() ? 1 : s.back(); }

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::variable: return "variable";
    case Op::constant: return "constant";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::subtract: return "subtract";
    case Op::scale: return "scale";
    case Op::multiply: return "multiply";
    case Op::divide: return "divide";
    case Op::relu: return "relu";
    case Op::tanh: return "tanh";
    case Op::sigmoid: return "sigmoid";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::sqrt: return "sqrt";
    case Op::step: return "step";
    case Op::sum: return "sum";
    case Op::row_sum: return "row_sum";
    case Op::squared_norm: return "squared_norm";
    case Op::dot: return "dot";
    case Op::sort: return "sort";
    case Op::reshape: return "reshape";
  }
  return "unknown";
}

const Shape& Var::shape() const { return graph->shape(*this); }

const Tensor& Gradients::operator[](Var leaf) const { return at(leaf.id); }

const Tensor& Gradients::at(std::size_t id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw StateError("no gradient recorded for node " + std::to_string(id));
  return it->second;
}

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Graph::variable(Tensor value) {
  Node n{Op::variable, {}, value.shape(), 0.0, std::move(value), true, {}};
  return push(std::move(n));
}

Var Graph::constant(Tensor value) {
  Node n{Op::constant, {}, value.shape(), 0.0, std::move(value), true, {}};
  return push(std::move(n));
}

void Graph::check(const Var& v) const {
  if (v.graph != this || v.id >= nodes_.size()) throw StateError("variable belongs to another graph");
}

bool Graph::evaluated(Var v) const {
  check(v);
  return nodes_[v.id].has_value;
}

const Tensor& Graph::value(Var v) const {
  check(v);
  const Node& n = nodes_[v.id];
  if (!n.has_value) {
    throw StateError("node " + std::to_string(v.id) + " (" + std::string(op_name(n.op)) +
                     ") has not been evaluated");
  }
  return n.value;
}

const Tensor& Graph::evaluate(Var root) {
  check(root);
  std::vector<char> needed(root.id + 1, 0);
  needed[root.id] = 1;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    if (!needed[i] || nodes_[i].has_value) continue;
    for (std::size_t in : nodes_[i].inputs) needed[in] = 1;
  }
  for (std::size_t i = 0; i <= root.id; ++i) {
    if (needed[i] && !nodes_[i].has_value) {
      compute(i);
    }
  }
  return nodes_[root.id].value;
}

void Graph::compute(std::size_t id) {
  Node& node = nodes_[id];
  const std::size_t n_out = shape_size(node.shape);
  std::vector<double> out(n_out, 0.0);
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[node.inputs[k]].value; };

  auto elementwise2 = [&](auto fn) {
    const auto a = in(0).values();
    const auto b = in(1).values();
    for (std::size_t i = 0; i < n_out; ++i) out[i] = fn(a[i % a.size()], b[i % b.size()]);
  };
  auto elementwise1 = [&](auto fn) {
    const auto a = in(0).values();
    for (std::size_t i = 0; i < n_out; ++i) out[i] = fn(a[i]);
  };

  switch (node.op) {
    case Op::variable:
    case Op::constant:
      return;
    case Op::matmul: {
      auto [m, k] = matrix_dims(in(0).shape());
      auto [k2, n] = matrix_dims(in(1).shape());
      (void)k2;
      MutMap(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)).noalias() =
          ConstMap(in(0).values().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) *
          ConstMap(in(1).values().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
      break;
    }
    case Op::add: elementwise2([](double a, double b) { return a + b; }); break;
    case Op::subtract: elementwise2([](double a, double b) { return a - b; }); break;
    case Op::multiply: elementwise2([](double a, double b) { return a * b; }); break;
    case Op::divide: elementwise2([](double a, double b) { return a / b; }); break;
    case Op::scale: {
      const double c = node.param;
      elementwise1([c](double a) { return c * a; });
      break;
    }
    case Op::relu: elementwise1([](double a) { return a > 0.0 ? a : 0.0; }); break;
    case Op::tanh: elementwise1([](double a) { return std::tanh(a); }); break;
    case Op::sigmoid: elementwise1([](double a) { return 1.0 / (1.0 + std::exp(-a)); }); break;
    case Op::exp: elementwise1([](double a) { return std::exp(a); }); break;
    case Op::log: elementwise1([](double a) { return std::log(a); }); break;
    case Op::sqrt: elementwise1([](double a) { return std::sqrt(a); }); break;
    case Op::step: elementwise1([](double a) { return a > 0.0 ? 1.0 : 0.0; }); break;
    case Op::sum: {
      double s = 0.0;
      for (double v : in(0).values()) s += v;
      out[0] = s;
      break;
    }
    case Op::row_sum: {
      const auto a = in(0).values();
      const std::size_t w = last_extent(in(0).shape());
      for (std::size_t r = 0; r < n_out; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < w; ++c) s += a[r * w + c];
        out[r] = s;
      }
      break;
    }
    case Op::squared_norm: {
      double s = 0.0;
      for (double v : in(0).values()) s += v * v;
      out[0] = s;
      break;
    }
    case Op::dot: {
      const auto a = in(0).values();
      const auto b = in(1).values();
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
      out[0] = s;
      break;
    }
    case Op::sort: {
      const auto a = in(0).values();
      const std::size_t w = last_extent(node.shape);
      node.permutation.resize(n_out);
      for (std::size_t r = 0; r < n_out / w; ++r) {
        auto first = node.permutation.begin() + static_cast<std::ptrdiff_t>(r * w);
        auto last = first + static_cast<std::ptrdiff_t>(w);
        std::iota(first, last, r * w);
        std::stable_sort(first, last, [&](std::size_t x, std::size_t y) { return a[x] < a[y]; });
      }
      for (std::size_t i = 0; i < n_out; ++i) out[i] = a[node.permutation[i]];
      break;
    }
    case Op::reshape: {
      const auto a = in(0).values();
      std::copy(a.begin(), a.end(), out.begin());
      break;
    }
  }

  for (double v : out) {
    if (!std::isfinite(v)) {
      throw EvaluationError("node " + std::to_string(id) + " (" + std::string(op_name(node.op)) +
                            ", shape " + shape_string(node.shape) + ") produced a non-finite value");
    }
  }
  node.value = Tensor(node.shape, std::move(out));
  node.has_value = true;
}

Gradients Graph::backward(Var root, double seed) const {
  check(root);
  if (!nodes_[root.id].has_value) {
    throw StateError("backward called before evaluate on node " + std::to_string(root.id));
  }

  std::vector<std::vector<double>> adj(root.id + 1);
  adj[root.id].assign(shape_size(nodes_[root.id].shape), seed);

  // Nodes that depend on no variable never need an adjoint.
  std::vector<char> live(root.id + 1, 0);
  for (std::size_t id = 0; id <= root.id; ++id) {
    const Node& node = nodes_[id];
    live[id] = node.op == Op::variable;
    for (std::size_t in : node.inputs) live[id] = live[id] || live[in];
  }
  std::vector<double> scratch[2];
  int turn = 0;

  auto acc = [&](std::size_t id) -> std::vector<double>& {
    if (!live[id]) {
      turn ^= 1;
      scratch[turn].assign(shape_size(nodes_[id].shape), 0.0);
      return scratch[turn];
    }
    if (adj[id].empty()) adj[id].assign(shape_size(nodes_[id].shape), 0.0);
    return adj[id];
  };

  for (std::size_t id = root.id + 1; id-- > 0;) {
    if (adj[id].empty()) continue;
    const Node& node = nodes_[id];
    const std::vector<double>& g = adj[id];
    const std::size_t n_out = g.size();
    auto val = [&](std::size_t k) { return nodes_[node.inputs[k]].value.values(); };
    const auto y = node.value.values();

    switch (node.op) {
      case Op::variable:
      case Op::constant:
      case Op::step:
        break;
      case Op::matmul: {
        auto [m, k] = matrix_dims(nodes_[node.inputs[0]].shape);
        auto [k2, n] = matrix_dims(nodes_[node.inputs[1]].shape);
        (void)k2;
        const auto em = static_cast<Eigen::Index>(m), ek = static_cast<Eigen::Index>(k),
                   en = static_cast<Eigen::Index>(n);
        ConstMap G(g.data(), em, en);
        ConstMap A(val(0).data(), em, ek);
        ConstMap B(val(1).data(), ek, en);
        if (live[node.inputs[0]]) MutMap(acc(node.inputs[0]).data(), em, ek).noalias() += G * B.transpose();
        if (live[node.inputs[1]]) MutMap(acc(node.inputs[1]).data(), ek, en).noalias() += A.transpose() * G;
        break;
      }
      case Op::add:
      case Op::subtract: {
        auto& da = acc(node.inputs[0]);
        auto& db = acc(node.inputs[1]);
        const double sb = node.op == Op::add ? 1.0 : -1.0;
        for (std::size_t i = 0; i < n_out; ++i) {
          da[i % da.size()] += g[i];
          db[i % db.size()] += sb * g[i];
        }
        break;
      }
      case Op::multiply: {
        const auto a = val(0), b = val(1);
        auto& da = acc(node.inputs[0]);
        auto& db = acc(node.inputs[1]);
        for (std::size_t i = 0; i < n_out; ++i) {
          da[i % a.size()] += g[i] * b[i % b.size()];
          db[i % b.size()] += g[i] * a[i % a.size()];
        }
        break;
      }
      case Op::divide: {
        const auto a = val(0), b = val(1);
        auto& da = acc(node.inputs[0]);
        auto& db = acc(node.inputs[1]);
        for (std::size_t i = 0; i < n_out; ++i) {
          const double bi = b[i % b.size()];
          da[i % a.size()] += g[i] / bi;
          db[i % b.size()] -= g[i] * a[i % a.size()] / (bi * bi);
        }
        break;
      }
      case Op::scale: {
        auto& da = acc(node.inputs[0]);
        for (std::size_t i = 0; i < n_out; ++i) da[i] += node.param * g[i];
        break;
      }
      case Op::relu: {
        const auto x = val(0);
        auto& da = acc(node.inputs[0]);
        for (std::size_t i = 0; i < n_out; ++i)
          if (x[i] > 0.0) da[i] += g[i];
        break;
      }
      case Op::tanh: {
        auto& da = acc(node.inputs[0]);
        for (std::size_t i = 0; i < n_out; ++i) da[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::sigmoid: {
        auto& da = acc(node.inputs[0]);
        for (std::size_t i = 0; i < n_out; ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::exp: {
        auto& da = acc(node.inputs[0]);
        for (std::size_t i = 0; i < n_out; ++i) da[i] += g[i] * y[i];
        break;
      }
      case Op::log: {
        const auto x = val(0);
        auto& da = acc(node.inputs[0]);
        for (std::size_t i = 0; i < n_out; ++i) da[i] += g[i] / x[i];
        break;
      }
      case Op::sqrt: {
        auto& da = acc(node.inputs[0]);
        for (std::size_t i = 0; i < n_out; ++i)
          if (y[i] > 0.0) da[i] += g[i] / (2.0 * y[i]);
        break;
      }
      case Op::sum: {
        auto& da = acc(node.inputs[0]);
        for (double& d : da) d += g[0];
        break;
      }
      case Op::row_sum: {
        auto& da = acc(node.inputs[0]);
        const std::size_t w = da.size() / n_out;
        for (std::size_t r = 0; r < n_out; ++r)
          for (std::size_t c = 0; c < w; ++c) da[r * w + c] += g[r];
        break;
      }
      case Op::squared_norm: {
        const auto x = val(0);
        auto& da = acc(node.inputs[0]);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += 2.0 * x[i] * g[0];
        break;
      }
      case Op::dot: {
        const auto a = val(0), b = val(1);
        auto& da = acc(node.inputs[0]);
        auto& db = acc(node.inputs[1]);
        for (std::size_t i = 0; i < a.size(); ++i) {
          da[i] += g[0] * b[i];
          db[i] += g[0] * a[i];
        }
        break;
      }
      case Op::sort: {
        auto& da = acc(node.inputs[0]);
        for (std::size_t i = 0; i < n_out; ++i) da[node.permutation[i]] += g[i];
        break;
      }
      case Op::reshape: {
        auto& da = acc(node.inputs[0]);
        for (std::size_t i = 0; i < n_out; ++i) da[i] += g[i];
        break;
      }
    }
  }

  Gradients grads;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].op != Op::variable) continue;
    if (id <= root.id && !adj[id].empty()) {
      grads.by_id_.emplace(id, Tensor(nodes_[id].shape, adj[id]));
    } else {
      grads.by_id_.emplace(id, Tensor::zeros(nodes_[id].shape));
    }
  }
  return grads;
}

Var make_node(Op op, std::vector<Var> inputs, Shape shape, double param) {
  Graph* g = inputs.front().graph;
  Graph::Node node{op, {}, std::move(shape), param, Tensor{}, false, {}};
  for (const Var& v : inputs) {
    if (v.graph != g) throw StateError(std::string(op_name(op)) + ": operands from different graphs");
    g->check(v);
    node.inputs.push_back(v.id);
  }
  return g->push(std::move(node));
}

namespace {

Var binary(Op op, Var a, Var b) {
  Shape out = broadcast_shape(op, a.shape(), b.shape());
  return make_node(op, {a, b}, std::move(out), 0.0);
}

Var unary(Op op, Var a) { return make_node(op, {a}, a.shape(), 0.0); }

}  // namespace

Var matmul(Var a, Var b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.empty() || sa.size() > 2 || sb.size() != 2 || matrix_dims(sa).second != sb[0]) {
    throw ShapeError("matmul: shapes " + shape_string(sa) + " and " + shape_string(sb) +
                     " do not compose");
  }
  Shape out = sa.size() == 1 ? Shape{sb[1]} : Shape{sa[0], sb[1]};
  return make_node(Op::matmul, {a, b}, std::move(out), 0.0);
}

Var add(Var a, Var b) { return binary(Op::add, a, b); }
Var subtract(Var a, Var b) { return binary(Op::subtract, a, b); }
Var multiply(Var a, Var b) { return binary(Op::multiply, a, b); }
Var divide(Var a, Var b) { return binary(Op::divide, a, b); }
Var scale(Var a, double c) { return make_node(Op::scale, {a}, a.shape(), c); }
Var relu(Var a) { return unary(Op::relu, a); }
Var tanh(Var a) { return unary(Op::tanh, a); }
Var sigmoid(Var a) { return unary(Op::sigmoid, a); }
Var exp(Var a) { return unary(Op::exp, a); }
Var log(Var a) { return unary(Op::log, a); }
Var sqrt(Var a) { return unary(Op::sqrt, a); }
Var step(Var a) { return unary(Op::step, a); }
Var sort_ascending(Var a) {
  if (a.shape().empty()) throw ShapeError("sort: scalar operand");
  return unary(Op::sort, a);
}

Var sum(Var a) { return make_node(Op::sum, {a}, Shape{}, 0.0); }
Var squared_norm(Var a) { return make_node(Op::squared_norm, {a}, Shape{}, 0.0); }

Var row_sum(Var a) {
  Shape s = a.shape();
  if (s.empty()) throw ShapeError("row_sum: scalar operand");
  s.pop_back();
  return make_node(Op::row_sum, {a}, std::move(s), 0.0);
}

Var dot(Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("dot: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                     " differ");
  }
  return make_node(Op::dot, {a, b}, Shape{}, 0.0);
}

Var reshape(Var a, Shape shape) {
  if (shape_size(shape) != shape_size(a.shape())) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  for (std::size_t e : shape)
    if (e == 0) throw ShapeError("reshape: zero extent");
  return make_node(Op::reshape, {a}, std::move(shape), 0.0);
}

Var abs(Var a) { return relu(a) + relu(-a); }

}  // namespace illcond::diffcore
