#pragma once

#include <cstdint>
#include <vector>

namespace oodbench {

using Point = std::vector<double>;

struct KmeansResult {
  std::vector<Point> centroids;
  std::vector<std::size_t> assign;
  double sse = 0.0;
  std::size_t iterations = 0;
};

// k-means++ seeding, Lloyd iterations until the assignment is stable or 300
// iterations pass. A cluster that empties is re-seeded at the point farthest
// from its current centroid.
KmeansResult kmeans(const std::vector<Point>& points, std::size_t k, std::uint64_t seed);

struct ElbowResult {
  std::size_t k = 1;
  std::vector<double> sse;  // SSE(k) for k in [k_min, k_max]
};

// Knee rule: the k whose (k, SSE) point lies farthest from the chord between
// the curve endpoints; ties resolve to the smaller k. A flat curve returns
// k_min with a warning.
ElbowResult elbow_k(const std::vector<Point>& points, std::size_t k_min,
                    std::size_t k_max, std::uint64_t seed);

}  // namespace oodbench
