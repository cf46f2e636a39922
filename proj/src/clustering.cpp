#include "oodbench/clustering.hpp"

#include <algorithm>
#include <cmath>

#include "oodbench/errors.hpp"
#include "oodbench/log.hpp"
#include "oodbench/rng.hpp"

namespace oodbench {

namespace {

double dist2(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

KmeansResult kmeans(const std::vector<Point>& points, std::size_t k, std::uint64_t seed) {
  if (points.empty()) throw ParameterError("kmeans needs at least one point");
  if (k == 0) throw ParameterError("kmeans needs k >= 1");
  if (k > points.size())
    throw ParameterError("kmeans k=" + std::to_string(k) + " exceeds point count " +
                         std::to_string(points.size()));
  const std::size_t dim = points.front().size();
  for (const Point& p : points)
    if (p.size() != dim) throw ParameterError("kmeans points must share one dimension");

  Rng rng(seed);
  KmeansResult res;
  res.centroids.reserve(k);

  // k-means++ seeding.
  res.centroids.push_back(points[rng.below(points.size())]);
  std::vector<double> d2(points.size());
  while (res.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = dist2(points[i], res.centroids[0]);
      for (std::size_t c = 1; c < res.centroids.size(); ++c)
        best = std::min(best, dist2(points[i], res.centroids[c]));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      res.centroids.push_back(points[rng.below(points.size())]);
      continue;
    }
    const double pick = rng.uniform01() * total;
    double acc = 0.0;
    std::size_t chosen = points.size() - 1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      acc += d2[i];
      if (acc >= pick) {
        chosen = i;
        break;
      }
    }
    res.centroids.push_back(points[chosen]);
  }

  res.assign.assign(points.size(), 0);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < 300; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      std::size_t best = 0;
      double bestd = dist2(points[i], res.centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = dist2(points[i], res.centroids[c]);
        if (d < bestd) {
          bestd = d;
          best = c;
        }
      }
      if (best != res.assign[i]) {
        res.assign[i] = best;
        changed = true;
      }
    }
    res.iterations = iter + 1;
    if (!changed) break;

    std::fill(counts.begin(), counts.end(), 0);
    std::vector<Point> sums(k, Point(dim, 0.0));
    for (std::size_t i = 0; i < points.size(); ++i) {
      ++counts[res.assign[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[res.assign[i]][j] += points[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Re-seed at the point farthest from its own centroid.
        std::size_t far = 0;
        double fard = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
          const double d = dist2(points[i], res.centroids[res.assign[i]]);
          if (d > fard) {
            fard = d;
            far = i;
          }
        }
        res.centroids[c] = points[far];
      } else {
        for (std::size_t j = 0; j < dim; ++j)
          res.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
      }
    }
  }

  res.sse = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    res.sse += dist2(points[i], res.centroids[res.assign[i]]);
  return res;
}

ElbowResult elbow_k(const std::vector<Point>& points, std::size_t k_min,
                    std::size_t k_max, std::uint64_t seed) {
  if (k_min == 0) throw ParameterError("elbow k_min must be >= 1");
  if (k_max < k_min) throw ParameterError("elbow k range is empty");
  if (k_max > points.size()) {
    log::warn("elbow k_max clamped from " + std::to_string(k_max) + " to point count " +
              std::to_string(points.size()));
    k_max = points.size();
    if (k_max < k_min) throw ParameterError("elbow k range exceeds point count");
  }

  ElbowResult res;
  for (std::size_t k = k_min; k <= k_max; ++k)
    res.sse.push_back(kmeans(points, k, mix_seed(seed, k)).sse);

  double sse_max = res.sse[0], sse_min = res.sse[0];
  for (double v : res.sse) {
    sse_max = std::max(sse_max, v);
    sse_min = std::min(sse_min, v);
  }
  if (sse_max - sse_min <= 1e-12 * std::max(1.0, sse_max)) {
    log::warn("elbow: flat SSE curve, returning smallest k");
    res.k = k_min;
    return res;
  }

  // Perpendicular distance of each (k, SSE) point from the endpoint chord.
  const double x0 = static_cast<double>(k_min), y0 = res.sse.front();
  const double x1 = static_cast<double>(k_max), y1 = res.sse.back();
  const double nx = y1 - y0, ny = -(x1 - x0);
  const double norm = std::sqrt(nx * nx + ny * ny);
  double best = -1.0;
  res.k = k_min;
  for (std::size_t i = 0; i < res.sse.size(); ++i) {
    const double x = static_cast<double>(k_min + i);
    const double d = std::fabs(nx * (x - x0) + ny * (res.sse[i] - y0)) / norm;
    if (d > best + 1e-15) {
      best = d;
      res.k = k_min + i;
    }
  }
  return res;
}

}  // namespace oodbench
