#pragma once

// Independent reference implementations used to check the library.

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "ocil/linalg.hpp"

namespace ocil::oracle {

using Dense = std::vector<std::vector<double>>;

// Dense k-NN kernel matrix computed directly from the points.
inline Dense dense_affinity(const Matrix& x, std::size_t k, double sigma) {
  const std::size_t n = static_cast<std::size_t>(x.rows());
  Dense g(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = 0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double t = x(Eigen::Index(i), c) - x(Eigen::Index(j), c);
        s += t * t;
      }
      d.emplace_back(s, j);
    }
    std::sort(d.begin(), d.end());
    for (std::size_t r = 0; r < std::min(k, d.size()); ++r)
      g[i][d[r].second] = std::exp(-d[r].first / (sigma * sigma));
  }
  return g;
}

inline std::vector<double> dense_power_iteration(const Dense& g, double alpha, double tol,
                                                 std::size_t max_iters) {
  const std::size_t n = g.size();
  std::vector<double> s(n, 1.0 / double(n));
  if (n <= 1) return s;
  for (std::size_t it = 0; it < max_iters; ++it) {
    std::vector<double> next(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += (g[i][j] + g[j][i]) * s[j];
      next[i] = alpha * acc + (1 - alpha) * s[i];
    }
    double l1 = 0;
    for (double v : next) l1 += std::abs(v);
    double change = 0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] /= l1;
      change += std::abs(next[i] - s[i]);
    }
    s = next;
    if (change < tol) break;
  }
  return s;
}

// Clusters as a set of sets, so partitions compare regardless of labeling.
using Partition = std::set<std::set<std::size_t>>;

inline Partition components(const std::vector<std::vector<bool>>& adj) {
  const std::size_t n = adj.size();
  std::vector<int> comp(n, -1);
  Partition out;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    std::set<std::size_t> members;
    std::vector<std::size_t> stack{start};
    comp[start] = int(start);
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      members.insert(v);
      for (std::size_t w = 0; w < n; ++w)
        if ((adj[v][w] || adj[w][v]) && comp[w] < 0) {
          comp[w] = int(start);
          stack.push_back(w);
        }
    }
    out.insert(members);
  }
  return out;
}

// Enumerates the pointer subgraph explicitly and takes its weakly connected
// components. Without any pointer, falls back to the undirected graph.
inline Partition pointer_components(const Dense& g, const std::vector<double>& s) {
  const std::size_t n = g.size();
  std::vector<std::vector<bool>> tilde(n, std::vector<bool>(n, false));
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    double best = 0;
    std::size_t arg = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (g[i][j] <= 0) continue;
      const double gain = g[i][j] * (s[j] - s[i]);
      if (gain > best) best = gain, arg = j;
    }
    if (arg < n) tilde[i][arg] = any = true;
  }
  if (!any)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) tilde[i][j] = g[i][j] > 0;
  return components(tilde);
}

template <class Clusters>
Partition to_partition(const Clusters& clusters) {
  Partition p;
  for (const auto& c : clusters) p.insert(std::set<std::size_t>(c.begin(), c.end()));
  return p;
}

}  // namespace ocil::oracle

namespace ocil::oracle {

// Per-cluster exemplar counts as water-filling: raise a common level L as far
// as the budget allows (clusters below L are stored whole), then hand the
// remainder to the largest clusters still above L, lower index on ties.
inline std::vector<std::size_t> water_fill(const std::vector<std::size_t>& sizes, std::size_t q) {
  auto filled = [&](std::size_t level) {
    std::size_t t = 0;
    for (auto s : sizes) t += std::min(s, level);
    return t;
  };
  std::size_t level = 0;
  const std::size_t top = sizes.empty() ? 0 : *std::max_element(sizes.begin(), sizes.end());
  while (level < top && filled(level + 1) <= q) ++level;
  std::vector<std::size_t> out;
  for (auto s : sizes) out.push_back(std::min(s, level));
  std::size_t rest = q - std::min(q, filled(level));
  std::vector<std::size_t> order(sizes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });
  for (auto i : order)
    if (rest > 0 && out[i] < sizes[i]) ++out[i], --rest;
  return out;
}

// Indices of the `count` members closest to the member mean (1-d values).
inline std::set<std::size_t> nearest_to_mean(const std::vector<double>& values,
                                             const std::vector<std::size_t>& members,
                                             std::size_t count) {
  double mean = 0;
  for (auto m : members) mean += values[m];
  mean /= double(members.size());
  std::vector<std::pair<double, std::size_t>> d;
  for (auto m : members) d.emplace_back(std::abs(values[m] - mean), m);
  std::sort(d.begin(), d.end());
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < count && i < d.size(); ++i) out.insert(d[i].second);
  return out;
}

}  // namespace ocil::oracle
