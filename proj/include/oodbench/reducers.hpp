#pragma once

#include <array>
#include <cstdint>
#include <variant>
#include <vector>

#include "oodbench/bytes.hpp"
#include "oodbench/clustering.hpp"

namespace oodbench {

enum class ReducerKind : std::uint8_t { Simple = 0, Pca = 1, Isomap = 2 };

// Truncation to the first two coordinates.
struct SimpleReducer {
  std::size_t dim = 0;
  std::array<double, 2> project(const Point& v) const;
};

struct PcaReducer {
  std::vector<double> mean, axis1, axis2;
  double var1 = 0.0, var2 = 0.0;  // explained variance per axis
  std::array<double, 2> project(const Point& v) const;
};

// Geodesic embedding with classical MDS. Out-of-sample points map to the
// embedding of the nearest anchor plus a local linear offset fitted over
// that anchor's neighborhood; anchors themselves map back exactly.
struct IsomapReducer {
  std::vector<Point> anchors;
  std::vector<std::array<double, 2>> embedding;
  std::vector<std::vector<std::uint32_t>> neighbor_idx;  // per anchor
  std::size_t n_neighbors = 0;
  std::array<double, 2> project(const Point& v) const;
};

using Reducer = std::variant<SimpleReducer, PcaReducer, IsomapReducer>;

std::array<double, 2> project(const Reducer& r, const Point& v);
ReducerKind reducer_kind(const Reducer& r);

SimpleReducer fit_simple(std::size_t dim);

// Top-2 eigenvectors of the covariance matrix (cyclic Jacobi). Axis sign:
// the largest-magnitude component is made positive. A rank-deficient second
// direction becomes the zero vector with a warning.
PcaReducer fit_pca2(const std::vector<Point>& data);

// k-NN graph geodesics + classical MDS. A disconnected graph keeps the
// largest component as anchors and warns.
IsomapReducer fit_isomap2(const std::vector<Point>& data, std::size_t n_neighbors);

// Classical MDS of a symmetric distance matrix (row-major m*m), top 2 axes.
std::vector<std::array<double, 2>> classical_mds2(const std::vector<double>& dist,
                                                  std::size_t m);

void serialize_reducer(ByteWriter& w, const Reducer& r);
Reducer deserialize_reducer(ByteReader& r);

}  // namespace oodbench
