#pragma once

#include <span>
#include <string_view>

#include "illcond/diffcore/graph.hpp"

namespace illcond::distances {

using diffcore::Tensor;
using diffcore::Var;

/// Distortion measures. wasserstein is the one-dimensional W1 distance
/// between the empirical value distributions of the two arguments.
enum class DistanceKind { l2, cosine, wasserstein };

std::string_view distance_name(DistanceKind kind);
/// Accepts l2, cos/cosine, wass/wasserstein.
DistanceKind parse_distance(std::string_view name);

/// Per-sample distance along the last axis: [B, m] x [B, m] -> [B], or
/// [m] x [m] -> scalar. Operand shapes must match exactly.
///
///   l2:          ||a - b||_2
///   cosine:      1 - <a, b> / sqrt(||a||^2 ||b||^2)   (zero norm -> evaluation error)
///   wasserstein: mean_i |sort(a)_i - sort(b)_i|
Var distance(DistanceKind kind, Var a, Var b);

/// Sum of per-sample distances over the batch.
Var batch_distortion(DistanceKind kind, Var a, Var b);

double dist_l2(const Tensor& a, const Tensor& b);
double dist_cosine(const Tensor& a, const Tensor& b);
double dist_wasserstein(const Tensor& a, const Tensor& b);
double dist(DistanceKind kind, const Tensor& a, const Tensor& b);

/// Sum over the batch of the per-sample distance; a and b are [B, m].
double batch_distortion(DistanceKind kind, const Tensor& a, const Tensor& b);

}  // namespace illcond::distances
