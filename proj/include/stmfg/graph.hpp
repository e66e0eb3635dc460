#ifndef STMFG_GRAPH_HPP
#define STMFG_GRAPH_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "stmfg/errors.hpp"
#include "stmfg/sparse.hpp"

namespace stmfg {

struct SpotCoordinate {
  double x = 0.0;
  double y = 0.0;
};

using SpotCoordinates = std::vector<SpotCoordinate>;

inline constexpr double kDefaultRadius = 550.0;
inline constexpr int kDefaultKnn = 15;

enum class KnnSymmetrization { Union, Intersection };

namespace detail {

inline SparseMatrix binary_from_pairs(Index n, const std::vector<std::pair<Index, Index>>& pairs) {
  std::vector<SparseEntry> entries;
  entries.reserve(pairs.size() * 2);
  for (const auto& [i, j] : pairs) {
    entries.push_back({i, j, 1.0});
    entries.push_back({j, i, 1.0});
  }
  return SparseMatrix(n, std::move(entries), true);
}

}  // namespace detail

/// Binary radius graph: edge (i, j), i != j, iff ||c_i - c_j|| <= radius.
inline SparseMatrix build_spatial_graph(const SpotCoordinates& coords, double radius = kDefaultRadius) {
  detail::require(!coords.empty(), "build_spatial_graph: no coordinates");
  detail::require(radius > 0.0, "build_spatial_graph: radius must be positive");
  const auto n = static_cast<Index>(coords.size());
  const double r2 = radius * radius;
  std::vector<std::pair<Index, Index>> pairs;
  for (Index i = 0; i < n; ++i) {
    const auto& a = coords[static_cast<std::size_t>(i)];
    for (Index j = i + 1; j < n; ++j) {
      const auto& b = coords[static_cast<std::size_t>(j)];
      const double dx = a.x - b.x;
      const double dy = a.y - b.y;
      if (dx * dx + dy * dy <= r2) pairs.emplace_back(i, j);
    }
  }
  return detail::binary_from_pairs(n, pairs);
}

/// Cosine KNN graph over the rows of x. Each spot selects its k most similar
/// other spots (ties broken by ascending index); selections are symmetrized by
/// union (default) or intersection.
inline SparseMatrix build_feature_graph(const Matrix& x, int k,
                                        KnnSymmetrization mode = KnnSymmetrization::Union) {
  const Index n = x.rows();
  detail::require(k >= 1, "build_feature_graph: k must be >= 1");
  detail::require(k < n, "build_feature_graph: k = " + std::to_string(k) +
                             " must be smaller than the spot count " + std::to_string(n));

  Eigen::VectorXd norms = x.rowwise().norm().cwiseMax(1e-12);
  Matrix u = x.array().colwise() / norms.array();
  Matrix sim = u * u.transpose();

  std::vector<std::vector<char>> chosen(static_cast<std::size_t>(n), std::vector<char>(static_cast<std::size_t>(n), 0));
  std::vector<Index> candidates;
  for (Index i = 0; i < n; ++i) {
    candidates.clear();
    for (Index j = 0; j < n; ++j) {
      if (j != i) candidates.push_back(j);
    }
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(), [&](Index a, Index b) {
      const double sa = sim(i, a);
      const double sb = sim(i, b);
      return sa != sb ? sa > sb : a < b;
    });
    for (int t = 0; t < k; ++t) chosen[static_cast<std::size_t>(i)][static_cast<std::size_t>(candidates[static_cast<std::size_t>(t)])] = 1;
  }

  std::vector<std::pair<Index, Index>> pairs;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const bool ij = chosen[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] != 0;
      const bool ji = chosen[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] != 0;
      const bool keep = mode == KnnSymmetrization::Union ? (ij || ji) : (ij && ji);
      if (keep) pairs.emplace_back(i, j);
    }
  }
  return detail::binary_from_pairs(n, pairs);
}

/// Symmetric GCN normalization D^-1/2 (A + I) D^-1/2, D the row sums of A + I.
inline SparseMatrix normalize_adjacency(const SparseMatrix& a) {
  detail::require(a.symmetric(), "normalize_adjacency: adjacency must be symmetric");
  const Index n = a.n();
  Eigen::VectorXd degree = Eigen::VectorXd::Ones(n);
  for (const auto& e : a.entries()) {
    detail::require(e.row != e.col, "normalize_adjacency: adjacency has a self-loop at " + std::to_string(e.row));
    degree(e.row) += e.value;
  }
  std::vector<SparseEntry> entries;
  entries.reserve(a.nnz() + static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) entries.push_back({i, i, 1.0 / degree(i)});
  // d_i * d_j commutes exactly, so (i, j) and (j, i) round identically.
  for (const auto& e : a.entries()) entries.push_back({e.row, e.col, e.value / std::sqrt(degree(e.row) * degree(e.col))});
  return SparseMatrix(n, std::move(entries), true);
}

struct GraphPair {
  SparseMatrix a_s;
  SparseMatrix a_f;
  SparseMatrix a_s_norm;
  SparseMatrix a_f_norm;
};

inline GraphPair build_graphs(const SpotCoordinates& coords, const Matrix& features, double radius, int knn,
                              KnnSymmetrization mode = KnnSymmetrization::Union) {
  detail::require_dims(static_cast<Index>(coords.size()) == features.rows(),
                       "build_graphs: coordinate count does not match feature rows");
  GraphPair g;
  g.a_s = build_spatial_graph(coords, radius);
  g.a_f = build_feature_graph(features, knn, mode);
  g.a_s_norm = normalize_adjacency(g.a_s);
  g.a_f_norm = normalize_adjacency(g.a_f);
  return g;
}

}  // namespace stmfg

#endif  // STMFG_GRAPH_HPP
