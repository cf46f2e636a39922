#include "oodbench/reducers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <utility>

#include "oodbench/errors.hpp"
#include "oodbench/log.hpp"
#include "oodbench/rng.hpp"

namespace oodbench {

namespace {

// Largest-magnitude component made positive; ties keep the lowest index.
void canonical_sign(std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::fabs(v[i]) > std::fabs(v[best])) best = i;
  if (!v.empty() && v[best] < 0.0)
    for (double& x : v) x = -x;
}

// Cyclic Jacobi for a symmetric matrix; eigenvectors come out in columns.
void jacobi_eigen(std::vector<double>& a, std::size_t d, std::vector<double>& evec,
                  std::vector<double>& eval) {
  evec.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) evec[i * d + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (std::fabs(apq) < 1e-300) continue;
        const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < d; ++i) {
          const double aip = a[i * d + p], aiq = a[i * d + q];
          a[i * d + p] = c * aip - s * aiq;
          a[i * d + q] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < d; ++i) {
          const double api = a[p * d + i], aqi = a[q * d + i];
          a[p * d + i] = c * api - s * aqi;
          a[q * d + i] = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < d; ++i) {
          const double vip = evec[i * d + p], viq = evec[i * d + q];
          evec[i * d + p] = c * vip - s * viq;
          evec[i * d + q] = s * vip + c * viq;
        }
      }
    }
  }
  eval.resize(d);
  for (std::size_t i = 0; i < d; ++i) eval[i] = a[i * d + i];
}

// Gaussian elimination with partial pivoting; returns false when singular.
bool solve_sym(std::vector<double> m, std::vector<double>& b, std::size_t n) {
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(m[r * n + col]) > std::fabs(m[piv * n + col])) piv = r;
    if (std::fabs(m[piv * n + col]) < 1e-300) return false;
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(m[piv * n + c], m[col * n + c]);
      std::swap(b[piv], b[col]);
    }
    const double inv = 1.0 / m[col * n + col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = m[r * n + col] * inv;
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) m[r * n + c] -= f * m[col * n + c];
      b[r] -= f * b[col];
    }
  }
  for (std::size_t col = n; col-- > 0;) {
    double acc = b[col];
    for (std::size_t c = col + 1; c < n; ++c) acc -= m[col * n + c] * b[c];
    b[col] = acc / m[col * n + col];
  }
  return true;
}

double euclid2(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

std::array<double, 2> SimpleReducer::project(const Point& v) const {
  if (v.size() != dim)
    throw ShapeError("reducer expects dimension " + std::to_string(dim));
  return {v[0], dim >= 2 ? v[1] : 0.0};
}

std::array<double, 2> PcaReducer::project(const Point& v) const {
  if (v.size() != mean.size())
    throw ShapeError("reducer expects dimension " + std::to_string(mean.size()));
  double p1 = 0.0, p2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double c = v[i] - mean[i];
    p1 += c * axis1[i];
    p2 += c * axis2[i];
  }
  return {p1, p2};
}

std::array<double, 2> IsomapReducer::project(const Point& v) const {
  if (anchors.empty()) throw ParameterError("isomap reducer has no anchors");
  if (v.size() != anchors.front().size())
    throw ShapeError("reducer expects dimension " + std::to_string(anchors.front().size()));
  std::size_t i0 = 0;
  double bestd = euclid2(v, anchors[0]);
  for (std::size_t i = 1; i < anchors.size(); ++i) {
    const double d = euclid2(v, anchors[i]);
    if (d < bestd) {
      bestd = d;
      i0 = i;
    }
  }
  const std::vector<std::uint32_t>& nb = neighbor_idx[i0];
  const std::size_t k = nb.size();
  if (k == 0) return embedding[i0];

  // Local linear offset: least squares from neighbor displacements to
  // embedding displacements, evaluated at v - anchor.
  const Point& p = anchors[i0];
  std::vector<double> G(k * k, 0.0), c(k, 0.0);
  double tr = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    const Point& qa = anchors[nb[a]];
    for (std::size_t b = a; b < k; ++b) {
      const Point& qb = anchors[nb[b]];
      double dot = 0.0;
      for (std::size_t j = 0; j < p.size(); ++j)
        dot += (qa[j] - p[j]) * (qb[j] - p[j]);
      G[a * k + b] = dot;
      G[b * k + a] = dot;
    }
    tr += G[a * k + a];
    double dot = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) dot += (qa[j] - p[j]) * (v[j] - p[j]);
    c[a] = dot;
  }
  const double ridge = 1e-10 * (1.0 + tr / static_cast<double>(k));
  for (std::size_t a = 0; a < k; ++a) G[a * k + a] += ridge;
  std::array<double, 2> out = embedding[i0];
  if (solve_sym(std::move(G), c, k)) {
    for (std::size_t a = 0; a < k; ++a) {
      out[0] += c[a] * (embedding[nb[a]][0] - embedding[i0][0]);
      out[1] += c[a] * (embedding[nb[a]][1] - embedding[i0][1]);
    }
  }
  return out;
}

std::array<double, 2> project(const Reducer& r, const Point& v) {
  return std::visit([&](const auto& red) { return red.project(v); }, r);
}

ReducerKind reducer_kind(const Reducer& r) {
  return static_cast<ReducerKind>(r.index());
}

SimpleReducer fit_simple(std::size_t dim) {
  if (dim == 0) throw ParameterError("reducer dimension must be positive");
  return SimpleReducer{dim};
}

PcaReducer fit_pca2(const std::vector<Point>& data) {
  if (data.empty()) throw ParameterError("pca needs at least one point");
  const std::size_t d = data.front().size();
  if (d == 0) throw ParameterError("pca needs non-empty points");
  for (const Point& p : data)
    if (p.size() != d) throw ParameterError("pca points must share one dimension");

  PcaReducer pca;
  pca.mean.assign(d, 0.0);
  for (const Point& p : data)
    for (std::size_t i = 0; i < d; ++i) pca.mean[i] += p[i];
  for (double& v : pca.mean) v /= static_cast<double>(data.size());

  std::vector<double> cov(d * d, 0.0);
  if (data.size() > 1) {
    for (const Point& p : data) {
      for (std::size_t i = 0; i < d; ++i) {
        const double ci = p[i] - pca.mean[i];
        for (std::size_t j = i; j < d; ++j) cov[i * d + j] += ci * (p[j] - pca.mean[j]);
      }
    }
    const double inv = 1.0 / static_cast<double>(data.size() - 1);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) {
        cov[i * d + j] *= inv;
        cov[j * d + i] = cov[i * d + j];
      }
  }

  std::vector<double> evec, eval;
  jacobi_eigen(cov, d, evec, eval);
  std::size_t i1 = 0;
  for (std::size_t i = 1; i < d; ++i)
    if (eval[i] > eval[i1]) i1 = i;
  std::size_t i2 = d;  // sentinel: no second axis
  for (std::size_t i = 0; i < d; ++i) {
    if (i == i1) continue;
    if (i2 == d || eval[i] > eval[i2]) i2 = i;
  }

  pca.axis1.resize(d);
  for (std::size_t i = 0; i < d; ++i) pca.axis1[i] = evec[i * d + i1];
  canonical_sign(pca.axis1);
  pca.var1 = std::max(0.0, eval[i1]);

  pca.axis2.assign(d, 0.0);
  pca.var2 = i2 == d ? 0.0 : std::max(0.0, eval[i2]);
  if (i2 == d || pca.var2 <= pca.var1 * 1e-12) {
    log::warn("pca: second direction is rank-deficient; using a zero axis");
    pca.var2 = 0.0;
  } else {
    for (std::size_t i = 0; i < d; ++i) pca.axis2[i] = evec[i * d + i2];
    canonical_sign(pca.axis2);
  }
  return pca;
}

std::vector<std::array<double, 2>> classical_mds2(const std::vector<double>& dist,
                                                  std::size_t m) {
  if (dist.size() != m * m) throw ParameterError("mds distance matrix size mismatch");
  std::vector<std::array<double, 2>> out(m, {0.0, 0.0});
  if (m == 1) return out;

  // Double centering: B = -1/2 J D^2 J.
  std::vector<double> b(m * m);
  std::vector<double> rowmean(m, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d2 = dist[i * m + j] * dist[i * m + j];
      b[i * m + j] = d2;
      rowmean[i] += d2;
    }
    rowmean[i] /= static_cast<double>(m);
    grand += rowmean[i];
  }
  grand /= static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      b[i * m + j] = -0.5 * (b[i * m + j] - rowmean[i] - rowmean[j] + grand);

  // Shifted power iteration for the two largest algebraic eigenpairs.
  double shift = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < m; ++j) row += std::fabs(b[i * m + j]);
    shift = std::max(shift, row);
  }
  Rng rng(0x15ABDE5ULL);
  std::vector<std::vector<double>> vecs;
  std::vector<double> lambdas;
  for (int axis = 0; axis < 2; ++axis) {
    std::vector<double> v(m);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    std::vector<double> w(m);
    for (int iter = 0; iter < 500; ++iter) {
      for (std::size_t i = 0; i < m; ++i) {
        double acc = shift * v[i];
        for (std::size_t j = 0; j < m; ++j) acc += b[i * m + j] * v[j];
        w[i] = acc;
      }
      for (std::size_t p = 0; p < vecs.size(); ++p) {
        const double lam = lambdas[p] + shift;
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i) dot += vecs[p][i] * v[i];
        for (std::size_t i = 0; i < m; ++i) w[i] -= lam * dot * vecs[p][i];
      }
      double norm = 0.0;
      for (double x : w) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-300) {
        std::fill(w.begin(), w.end(), 0.0);
        break;
      }
      double delta = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        w[i] /= norm;
        delta = std::max(delta, std::fabs(w[i] - v[i]));
      }
      std::swap(v, w);
      if (delta < 1e-13) break;
    }
    double lam = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += b[i * m + j] * v[j];
      lam += v[i] * acc;
    }
    canonical_sign(v);
    vecs.push_back(v);
    lambdas.push_back(lam);
  }
  for (int axis = 0; axis < 2; ++axis) {
    const double scale = std::sqrt(std::max(0.0, lambdas[static_cast<std::size_t>(axis)]));
    for (std::size_t i = 0; i < m; ++i)
      out[i][static_cast<std::size_t>(axis)] = scale * vecs[static_cast<std::size_t>(axis)][i];
  }
  return out;
}

IsomapReducer fit_isomap2(const std::vector<Point>& data, std::size_t n_neighbors) {
  if (data.size() < 2) throw ParameterError("isomap needs at least two points");
  const std::size_t n = data.size();
  const std::size_t dim = data.front().size();
  for (const Point& p : data)
    if (p.size() != dim) throw ParameterError("isomap points must share one dimension");
  if (n_neighbors == 0) throw ParameterError("isomap needs n_neighbors >= 1");
  if (n_neighbors > n - 1) {
    log::warn("isomap n_neighbors clamped to " + std::to_string(n - 1));
    n_neighbors = n - 1;
  }

  // k nearest neighbors per point, then the undirected union graph.
  std::vector<std::vector<std::uint32_t>> knn(n);
  {
    std::vector<std::pair<double, std::uint32_t>> cand(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t w = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        cand[w++] = {euclid2(data[i], data[j]), static_cast<std::uint32_t>(j)};
      }
      std::partial_sort(cand.begin(), cand.begin() + static_cast<long>(n_neighbors),
                        cand.end());
      knn[i].reserve(n_neighbors);
      for (std::size_t t = 0; t < n_neighbors; ++t) knn[i].push_back(cand[t].second);
    }
  }
  std::vector<std::vector<std::pair<std::uint32_t, double>>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint32_t j : knn[i]) {
      const double d = std::sqrt(euclid2(data[i], data[j]));
      adj[i].push_back({j, d});
      adj[j].push_back({static_cast<std::uint32_t>(i), d});
    }
  }

  // Largest connected component keeps the anchors.
  std::vector<int> comp(n, -1);
  int n_comp = 0;
  std::vector<std::size_t> comp_size;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<std::size_t> stack{s};
    comp[s] = n_comp;
    std::size_t size = 0;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      ++size;
      for (const auto& [v, d] : adj[u]) {
        if (comp[v] < 0) {
          comp[v] = n_comp;
          stack.push_back(v);
        }
      }
    }
    comp_size.push_back(size);
    ++n_comp;
  }
  int keep = 0;
  for (int c = 1; c < n_comp; ++c)
    if (comp_size[static_cast<std::size_t>(c)] > comp_size[static_cast<std::size_t>(keep)])
      keep = c;
  if (n_comp > 1)
    log::warn("isomap: graph has " + std::to_string(n_comp) +
              " components; keeping the largest with " +
              std::to_string(comp_size[static_cast<std::size_t>(keep)]) + " points");

  std::vector<std::uint32_t> local_of(n, UINT32_MAX);
  IsomapReducer red;
  red.n_neighbors = n_neighbors;
  for (std::size_t i = 0; i < n; ++i) {
    if (comp[i] == keep) {
      local_of[i] = static_cast<std::uint32_t>(red.anchors.size());
      red.anchors.push_back(data[i]);
    }
  }
  const std::size_t m = red.anchors.size();
  red.neighbor_idx.resize(m);
  for (std::size_t i = 0; i < n; ++i) {
    if (local_of[i] == UINT32_MAX) continue;
    for (std::uint32_t j : knn[i]) red.neighbor_idx[local_of[i]].push_back(local_of[j]);
  }

  // All-pairs geodesics over the component (Dijkstra per anchor).
  std::vector<double> dist(m * m, 0.0);
  {
    std::vector<double> dd(n);
    using Item = std::pair<double, std::uint32_t>;
    for (std::size_t src = 0; src < n; ++src) {
      if (local_of[src] == UINT32_MAX) continue;
      std::fill(dd.begin(), dd.end(), std::numeric_limits<double>::infinity());
      dd[src] = 0.0;
      std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
      pq.push({0.0, static_cast<std::uint32_t>(src)});
      while (!pq.empty()) {
        const auto [du, u] = pq.top();
        pq.pop();
        if (du > dd[u]) continue;
        for (const auto& [v, w] : adj[u]) {
          const double nd = du + w;
          if (nd < dd[v]) {
            dd[v] = nd;
            pq.push({nd, v});
          }
        }
      }
      for (std::size_t j = 0; j < n; ++j)
        if (local_of[j] != UINT32_MAX)
          dist[local_of[src] * m + local_of[j]] = dd[j];
    }
  }

  red.embedding = classical_mds2(dist, m);
  return red;
}

void serialize_reducer(ByteWriter& w, const Reducer& r) {
  w.put_u8(static_cast<std::uint8_t>(reducer_kind(r)));
  if (const auto* s = std::get_if<SimpleReducer>(&r)) {
    w.put_u32(static_cast<std::uint32_t>(s->dim));
  } else if (const auto* p = std::get_if<PcaReducer>(&r)) {
    w.put_u32(static_cast<std::uint32_t>(p->mean.size()));
    for (double v : p->mean) w.put_f64(v);
    for (double v : p->axis1) w.put_f64(v);
    for (double v : p->axis2) w.put_f64(v);
    w.put_f64(p->var1);
    w.put_f64(p->var2);
  } else if (const auto* iso = std::get_if<IsomapReducer>(&r)) {
    w.put_u32(static_cast<std::uint32_t>(iso->anchors.size()));
    w.put_u32(static_cast<std::uint32_t>(iso->anchors.empty() ? 0 : iso->anchors.front().size()));
    w.put_u32(static_cast<std::uint32_t>(iso->n_neighbors));
    for (const Point& a : iso->anchors)
      for (double v : a) w.put_f64(v);
    for (const auto& e : iso->embedding) {
      w.put_f64(e[0]);
      w.put_f64(e[1]);
    }
    for (const auto& nb : iso->neighbor_idx) {
      w.put_u32(static_cast<std::uint32_t>(nb.size()));
      for (std::uint32_t x : nb) w.put_u32(x);
    }
  }
}

Reducer deserialize_reducer(ByteReader& r) {
  const std::uint8_t kind = r.get_u8();
  if (kind == static_cast<std::uint8_t>(ReducerKind::Simple)) {
    SimpleReducer s;
    s.dim = r.get_u32();
    return s;
  }
  if (kind == static_cast<std::uint8_t>(ReducerKind::Pca)) {
    PcaReducer p;
    const std::uint32_t d = r.get_u32();
    p.mean.resize(d);
    p.axis1.resize(d);
    p.axis2.resize(d);
    for (double& v : p.mean) v = r.get_f64();
    for (double& v : p.axis1) v = r.get_f64();
    for (double& v : p.axis2) v = r.get_f64();
    p.var1 = r.get_f64();
    p.var2 = r.get_f64();
    return p;
  }
  if (kind == static_cast<std::uint8_t>(ReducerKind::Isomap)) {
    IsomapReducer iso;
    const std::uint32_t m = r.get_u32();
    const std::uint32_t d = r.get_u32();
    iso.n_neighbors = r.get_u32();
    iso.anchors.assign(m, Point(d));
    for (Point& a : iso.anchors)
      for (double& v : a) v = r.get_f64();
    iso.embedding.resize(m);
    for (auto& e : iso.embedding) {
      e[0] = r.get_f64();
      e[1] = r.get_f64();
    }
    iso.neighbor_idx.resize(m);
    for (auto& nb : iso.neighbor_idx) {
      const std::uint32_t k = r.get_u32();
      nb.resize(k);
      for (std::uint32_t& x : nb) x = r.get_u32();
    }
    return iso;
  }
  throw FormatError("unknown reducer kind " + std::to_string(kind));
}

}  // namespace oodbench
