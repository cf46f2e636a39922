#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"

#include "oodbench/clustering.hpp"
#include "oodbench/errors.hpp"
#include "oodbench/rng.hpp"

using namespace oodbench;

namespace {

double dist2(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Three tight blobs far apart; 20 points each, blob index = i / 20.
std::vector<Point> three_blobs(std::uint64_t seed) {
  const double centers[3][2] = {{0.0, 0.0}, {10.0, 0.0}, {0.0, 10.0}};
  Rng rng(seed);
  std::vector<Point> pts;
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < 20; ++i)
      pts.push_back({centers[b][0] + rng.uniform(-0.5, 0.5),
                     centers[b][1] + rng.uniform(-0.5, 0.5)});
  return pts;
}

}  // namespace

TEST_CASE("separated blobs are recovered exactly") {
  const auto pts = three_blobs(1);
  const KmeansResult r = kmeans(pts, 3, 7);
  REQUIRE(r.centroids.size() == 3);
  REQUIRE(r.assign.size() == pts.size());
  CHECK(r.iterations >= 1);
  CHECK(r.iterations < 300);

  // Each blob lands in one cluster and no two blobs share one.
  std::set<std::size_t> cluster_of_blob;
  for (int b = 0; b < 3; ++b) {
    const std::size_t c = r.assign[static_cast<std::size_t>(b) * 20];
    cluster_of_blob.insert(c);
    for (int i = 0; i < 20; ++i) CHECK(r.assign[static_cast<std::size_t>(b) * 20 + i] == c);
  }
  CHECK(cluster_of_blob.size() == 3);

  // Converged state: every centroid is the mean of its members and every
  // point sits with its nearest centroid.
  for (std::size_t c = 0; c < 3; ++c) {
    Point mean(2, 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (r.assign[i] != c) continue;
      for (std::size_t d = 0; d < 2; ++d) mean[d] += pts[i][d];
      ++count;
    }
    REQUIRE(count > 0);
    for (std::size_t d = 0; d < 2; ++d) {
      mean[d] /= static_cast<double>(count);
      CHECK(r.centroids[c][d] == doctest::Approx(mean[d]).epsilon(1e-12));
    }
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double own = dist2(pts[i], r.centroids[r.assign[i]]);
    for (std::size_t c = 0; c < 3; ++c) CHECK(own <= dist2(pts[i], r.centroids[c]) + 1e-12);
  }

  // The reported SSE matches a recomputation from the assignment.
  double sse = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) sse += dist2(pts[i], r.centroids[r.assign[i]]);
  CHECK(r.sse == doctest::Approx(sse).epsilon(1e-12));
}

TEST_CASE("clustering is a pure function of points and seed") {
  const auto pts = three_blobs(2);
  const KmeansResult a = kmeans(pts, 4, 11);
  const KmeansResult b = kmeans(pts, 4, 11);
  CHECK(a.assign == b.assign);
  CHECK(a.centroids == b.centroids);
  CHECK(a.sse == b.sse);
}

TEST_CASE("single cluster reduces to the mean") {
  const std::vector<Point> pts = {{1.0, 2.0}, {3.0, 6.0}, {5.0, 4.0}};
  const KmeansResult r = kmeans(pts, 1, 0);
  CHECK(r.centroids[0][0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(r.centroids[0][1] == doctest::Approx(4.0).epsilon(1e-15));
  double sse = 0.0;
  for (const auto& p : pts) sse += dist2(p, r.centroids[0]);
  CHECK(r.sse == doctest::Approx(sse).epsilon(1e-15));
}

TEST_CASE("k equal to the point count gives a zero-error partition") {
  const std::vector<Point> pts = {{0.0}, {5.0}, {9.0}, {14.0}};
  const KmeansResult r = kmeans(pts, 4, 3);
  CHECK(r.sse == 0.0);
  std::set<std::size_t> used(r.assign.begin(), r.assign.end());
  CHECK(used.size() == 4);
  for (std::size_t i = 0; i < pts.size(); ++i)
    CHECK(r.centroids[r.assign[i]] == pts[i]);
}

TEST_CASE("clustering input validation") {
  const std::vector<Point> pts = {{0.0}, {1.0}};
  CHECK_THROWS_AS(kmeans({}, 1, 0), ParameterError);
  CHECK_THROWS_AS(kmeans(pts, 0, 0), ParameterError);
  CHECK_THROWS_AS(kmeans(pts, 3, 0), ParameterError);
  CHECK_THROWS_AS(kmeans({{0.0}, {1.0, 2.0}}, 1, 0), ParameterError);
}

TEST_CASE("the knee lands on the blob count") {
  const auto pts = three_blobs(3);
  const ElbowResult e = elbow_k(pts, 1, 6, 17);
  CHECK(e.k == 3);
  REQUIRE(e.sse.size() == 6);
  for (double v : e.sse) CHECK(v >= 0.0);
  // SSE collapses once each blob has its own centroid.
  CHECK(e.sse[2] < 0.05 * e.sse[0]);

  // The chosen k maximizes the distance from the endpoint chord; recompute
  // the rule from the returned curve.
  const double x0 = 1.0, y0 = e.sse.front();
  const double x1 = 6.0, y1 = e.sse.back();
  const double nx = y1 - y0, ny = -(x1 - x0);
  const double norm = std::sqrt(nx * nx + ny * ny);
  double best = -1.0;
  std::size_t best_k = 1;
  for (std::size_t i = 0; i < e.sse.size(); ++i) {
    const double x = 1.0 + static_cast<double>(i);
    const double d = std::fabs(nx * (x - x0) + ny * (e.sse[i] - y0)) / norm;
    if (d > best + 1e-15) {
      best = d;
      best_k = 1 + i;
    }
  }
  CHECK(e.k == best_k);
}

TEST_CASE("a flat error curve backs off to the smallest k") {
  const std::vector<Point> pts(6, Point{2.0, 2.0});
  const ElbowResult e = elbow_k(pts, 1, 4, 5);
  CHECK(e.k == 1);
  for (double v : e.sse) CHECK(v == 0.0);
}

TEST_CASE("elbow range validation") {
  const auto pts = three_blobs(4);
  CHECK_THROWS_AS(elbow_k(pts, 0, 3, 0), ParameterError);
  CHECK_THROWS_AS(elbow_k(pts, 4, 2, 0), ParameterError);
  // A range past the point count clamps; one entirely past it throws.
  const std::vector<Point> tiny = {{0.0}, {1.0}, {2.0}};
  const ElbowResult e = elbow_k(tiny, 1, 10, 0);
  CHECK(e.sse.size() == 3);
  CHECK_THROWS_AS(elbow_k(tiny, 5, 10, 0), ParameterError);
}
