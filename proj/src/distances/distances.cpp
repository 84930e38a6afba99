#include "illcond/distances/distances.hpp"

#include <cmath>
#include <string>

#include "illcond/errors.hpp"

namespace illcond::distances {

namespace dc = diffcore;

std::string_view distance_name(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::l2: return "l2";
    case DistanceKind::cosine: return "cos";
    case DistanceKind::wasserstein: return "wass";
  }
  return "l2";
}

DistanceKind parse_distance(std::string_view name) {
  if (name == "l2") return DistanceKind::l2;
  if (name == "cos" || name == "cosine") return DistanceKind::cosine;
  if (name == "wass" || name == "wasserstein") return DistanceKind::wasserstein;
  throw ConfigError("unknown distance '" + std::string(name) + "'");
}

Var distance(DistanceKind kind, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(distance_name(kind)) + " distance: shapes " + dc::shape_string(a.shape()) +
                     " and " + dc::shape_string(b.shape()) + " differ");
  }
  if (a.shape().empty()) throw ShapeError("distance of scalars is undefined");
  dc::Graph& g = *a.graph;
  switch (kind) {
    case DistanceKind::l2: {
      Var d = a - b;
      return dc::sqrt(dc::row_sum(d * d));
    }
    case DistanceKind::cosine: {
      Var ab = dc::row_sum(a * b);
      Var aa = dc::row_sum(a * a);
      Var bb = dc::row_sum(b * b);
      Var one = g.constant(dc::Tensor::filled(ab.shape(), 1.0));
      return one - ab / dc::sqrt(aa * bb);
    }
    case DistanceKind::wasserstein: {
      const double m = static_cast<double>(a.shape().back());
      Var d = dc::sort_ascending(a) - dc::sort_ascending(b);
      return (1.0 / m) * dc::row_sum(dc::abs(d));
    }
  }
  throw ConfigError("unknown distance kind");
}

Var batch_distortion(DistanceKind kind, Var a, Var b) { return dc::sum(distance(kind, a, b)); }

namespace {

double eval_distance(DistanceKind kind, const Tensor& a, const Tensor& b, bool batched) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(distance_name(kind)) + " distance: shapes " + dc::shape_string(a.shape()) +
                     " and " + dc::shape_string(b.shape()) + " differ");
  }
  if (kind == DistanceKind::cosine) {
    const std::size_t w = a.rank() == 0 ? 1 : a.shape().back();
    for (std::size_t r = 0; r < a.size() / w; ++r) {
      double na = 0.0, nb = 0.0;
      for (std::size_t c = 0; c < w; ++c) {
        na += a[r * w + c] * a[r * w + c];
        nb += b[r * w + c] * b[r * w + c];
      }
      if (na == 0.0 || nb == 0.0) throw EvaluationError("cosine distance is undefined for a zero-norm input");
    }
  }
  dc::Graph g;
  Var va = g.constant(a), vb = g.constant(b);
  Var out = batched ? batch_distortion(kind, va, vb) : distance(kind, va, vb);
  return g.evaluate(out).item();
}

}  // namespace

double dist_l2(const Tensor& a, const Tensor& b) { return eval_distance(DistanceKind::l2, a, b, false); }
double dist_cosine(const Tensor& a, const Tensor& b) { return eval_distance(DistanceKind::cosine, a, b, false); }
double dist_wasserstein(const Tensor& a, const Tensor& b) {
  return eval_distance(DistanceKind::wasserstein, a, b, false);
}
double dist(DistanceKind kind, const Tensor& a, const Tensor& b) { return eval_distance(kind, a, b, false); }

double batch_distortion(DistanceKind kind, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2) throw ShapeError("batch_distortion expects [B, m] operands");
  return eval_distance(kind, a, b, true);
}

}  // namespace illcond::distances
