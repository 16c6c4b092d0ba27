#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ocil/errors.hpp"
#include "ocil/linalg.hpp"

namespace ocil {

struct Edge {
  std::size_t target;
  double weight;
};

// Sparse k-NN graph with Gaussian-kernel weights. Row i lists the stored
// neighbors of i in increasing distance order; the diagonal is never stored.
struct AffinityGraph {
  std::vector<std::vector<Edge>> rows;
  std::size_t neighbor_count = 0;
  double bandwidth = 0.0;

  std::size_t size() const { return rows.size(); }

  double weight(std::size_t i, std::size_t j) const {
    for (const auto& e : rows[i])
      if (e.target == j) return e.weight;
    return 0.0;
  }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.size();
    return n;
  }
};

struct ClusterAssignment {
  // Disjoint, non-empty, ascending index sets covering 0..n-1, ordered by
  // their smallest member.
  std::vector<std::vector<std::size_t>> clusters;
  std::size_t iterations_used = 0;

  std::size_t size() const { return clusters.size(); }
};

struct PicConfig {
  std::size_t neighbors = 10;
  double sigma = 0.5;
  double alpha = 0.001;
  double tol = 1e-6;
  std::size_t max_iters = 200;
  // Scale each feature row to unit L2 norm before building the graph, so the
  // bandwidth is relative to unit-length embeddings.
  bool normalize = false;
};

inline Matrix l2_normalize_rows(Matrix m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n > 0.0) m.row(i) /= n;
  }
  return m;
}

// Row i holds exp(-|x_i - x_j|^2 / sigma^2) for the min(k, n-1) nearest j,
// ties broken by lower index. Weights that underflow to zero are not stored.
inline AffinityGraph build_affinity_graph(const Matrix& features, std::size_t k, double sigma) {
  if (!(sigma > 0.0)) throw InvalidInput("sigma must be positive");
  if (k < 1) throw InvalidInput("k must be at least 1");
  if (!features.allFinite()) throw NumericError("non-finite feature values");

  const auto n = static_cast<std::size_t>(features.rows());
  AffinityGraph g;
  g.rows.resize(n);
  g.neighbor_count = n > 0 ? std::min(k, n - 1) : 0;
  g.bandwidth = sigma;
  const double inv_s2 = 1.0 / (sigma * sigma);

  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d2 = (features.row(static_cast<Eigen::Index>(i)) -
                         features.row(static_cast<Eigen::Index>(j)))
                            .squaredNorm();
      cand.emplace_back(d2, j);
    }
    const std::size_t keep = g.neighbor_count;
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end());
    for (std::size_t r = 0; r < keep; ++r) {
      const double w = std::exp(-cand[r].first * inv_s2);
      if (w > 0.0) g.rows[i].push_back({cand[r].second, w});
    }
  }
  return g;
}

struct PowerIterationResult {
  Vector s;
  std::size_t iterations = 0;
};

// Iterates s <- L1(alpha (G + G^T) s + (1 - alpha) s) from the uniform vector
// until the L1 change drops below tol or max_iters is reached.
inline PowerIterationResult power_iteration_vector(const AffinityGraph& graph, double alpha,
                                                   double tol, std::size_t max_iters) {
  const auto n = static_cast<Eigen::Index>(graph.size());
  PowerIterationResult out;
  out.s = Vector::Constant(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
  if (n <= 1) return out;

  Vector next(n);
  for (std::size_t it = 0; it < max_iters; ++it) {
    next.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (const auto& e : graph.rows[static_cast<std::size_t>(i)]) {
        const auto j = static_cast<Eigen::Index>(e.target);
        next[i] += e.weight * out.s[j];
        next[j] += e.weight * out.s[i];
      }
    }
    next = alpha * next + (1.0 - alpha) * out.s;
    next /= next.lpNorm<1>();
    if (!next.allFinite()) throw NumericError("power iteration diverged");
    const double change = (next - out.s).lpNorm<1>();
    out.s.swap(next);
    out.iterations = it + 1;
    if (change < tol) break;
  }
  return out;
}

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

  std::vector<std::vector<std::size_t>> groups() {
    std::vector<std::vector<std::size_t>> by_root(parent_.size());
    for (std::size_t i = 0; i < parent_.size(); ++i) by_root[find(i)].push_back(i);
    std::vector<std::vector<std::size_t>> out;
    for (auto& g : by_root)
      if (!g.empty()) out.push_back(std::move(g));
    return out;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

// Each vertex i points at the stored neighbor j maximizing e_ij (s_j - s_i),
// lower index on ties; vertices whose best gain is <= 0 are roots. Clusters
// are the weakly connected components of those pointers. When no vertex
// emits a pointer at all, components of the undirected k-NN graph are used.
inline ClusterAssignment extract_clusters(const AffinityGraph& graph, const Vector& s) {
  const std::size_t n = graph.size();
  if (static_cast<std::size_t>(s.size()) != n)
    throw ShapeError("score vector length does not match graph size");

  detail::DisjointSets sets(n);
  bool any_pointer = false;
  for (std::size_t i = 0; i < n; ++i) {
    double best = 0.0;
    std::size_t best_j = n;
    for (const auto& e : graph.rows[i]) {
      const double gain = e.weight * (s[static_cast<Eigen::Index>(e.target)] -
                                      s[static_cast<Eigen::Index>(i)]);
      if (gain > best || (gain == best && best_j < n && gain > 0.0 && e.target < best_j)) {
        best = gain;
        best_j = e.target;
      }
    }
    if (best_j < n) {
      sets.unite(i, best_j);
      any_pointer = true;
    }
  }
  if (!any_pointer) {
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& e : graph.rows[i]) sets.unite(i, e.target);
  }

  ClusterAssignment out;
  out.clusters = sets.groups();
  return out;
}

inline ClusterAssignment cluster_class(const Matrix& features, const PicConfig& cfg = {}) {
  const auto graph = build_affinity_graph(cfg.normalize ? l2_normalize_rows(features) : features,
                                          cfg.neighbors, cfg.sigma);
  const auto pic = power_iteration_vector(graph, cfg.alpha, cfg.tol, cfg.max_iters);
  auto out = extract_clusters(graph, pic.s);
  out.iterations_used = pic.iterations;
  return out;
}

}  // namespace ocil
