#pragma once

#include <cstddef>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "illcond/diffcore/tensor.hpp"

namespace illcond::diffcore {

/// Primitive operations. Every primitive has an exact adjoint rule in
/// graph.cpp.
///
/// Binary elementwise primitives (add, subtract, multiply, divide) broadcast
/// when one operand's shape is a suffix of the other's: a [B, n] tensor
/// combines with an [n] row or a scalar, and the adjoint of the broadcast
/// operand is summed over the repeated positions.
enum class Op {
  variable,
  constant,
  matmul,    // [m,k] x [k,n] -> [m,n]
  add,
  subtract,
  scale,     // x * c for a fixed double c
  multiply,  // elementwise
  divide,    // elementwise
  relu,      // subgradient at 0 is 0
  tanh,
  sigmoid,
  exp,
  log,
  sqrt,      // adjoint at exactly 0 is defined as 0
  step,      // heaviside(x > 0); zero adjoint (derivative is 0 almost everywhere)
  sum,       // full reduction -> scalar
  row_sum,   // reduction over the last axis
  squared_norm,
  dot,
  sort,      // ascending along the last axis, stable; permutation kept for backward
  reshape,
};

std::string_view op_name(Op op);

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while its graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Shape& shape() const;
};

/// Gradients of a root with respect to every variable leaf of a graph.
class Gradients {
 public:
  const Tensor& operator[](Var leaf) const;
  const Tensor& at(std::size_t id) const;
  bool contains(Var leaf) const { return by_id_.count(leaf.id) != 0; }

 private:
  friend class Graph;
  std::unordered_map<std::size_t, Tensor> by_id_;
};

/// Append-only expression graph with lazy forward evaluation.
///
/// Nodes are created in topological order, so node ids double as a
/// schedule. Shapes are checked when a node is created; values are computed
/// by evaluate() and memoized. backward() keeps its adjoint buffers local to
/// the call, so a single evaluated graph can be differentiated repeatedly.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf whose gradient backward() reports.
  Var variable(Tensor value);
  /// Leaf treated as a fixed input.
  Var constant(Tensor value);

  const Tensor& evaluate(Var root);
  /// Value of an already evaluated node.
  const Tensor& value(Var v) const;
  bool evaluated(Var v) const;

  /// Reverse-mode sweep from root with every adjoint entry of root set to
  /// seed. Requires evaluate(root) first.
  Gradients backward(Var root, double seed = 1.0) const;

  std::size_t node_count() const noexcept { return nodes_.size(); }
  Op op(Var v) const { return nodes_.at(v.id).op; }
  const Shape& shape(Var v) const { return nodes_.at(v.id).shape; }

 private:
  friend Var make_node(Op op, std::vector<Var> inputs, Shape shape, double param);

  struct Node {
    Op op;
    std::vector<std::size_t> inputs;
    Shape shape;
    double param = 0.0;
    Tensor value;
    bool has_value = false;
    std::vector<std::size_t> permutation;  // sort only
  };

  Var push(Node node);
  void compute(std::size_t id);
  void check(const Var& v) const;

  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var scale(Var a, double c);
Var multiply(Var a, Var b);
Var divide(Var a, Var b);
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var step(Var a);
Var sum(Var a);
Var row_sum(Var a);
Var squared_norm(Var a);
Var dot(Var a, Var b);
Var sort_ascending(Var a);
Var reshape(Var a, Shape shape);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return subtract(a, b); }
inline Var operator*(Var a, Var b) { return multiply(a, b); }
inline Var operator/(Var a, Var b) { return divide(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator-(Var a) { return scale(a, -1.0); }

/// |a| as relu(a) + relu(-a); the adjoint at 0 is 0.
Var abs(Var a);

}  // namespace illcond::diffcore
