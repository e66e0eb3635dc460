#ifndef STMFG_CLUSTER_HPP
#define STMFG_CLUSTER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "stmfg/errors.hpp"
#include "stmfg/sparse.hpp"

namespace stmfg {

struct Partition {
  std::vector<int> labels;
  int k = 0;
};

struct KMeansResult {
  Partition partition;
  Matrix centers;
  double inertia = 0.0;
  int iterations = 0;
  int best_restart = 0;
  /// Inertia after each Lloyd iteration of the winning restart.
  std::vector<double> inertia_trace;
};

struct KMeansOptions {
  int restarts = 20;
  int max_iter = 300;
};

namespace detail {

inline double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline Matrix kmeanspp_seed(const Matrix& z, int k, std::mt19937_64& rng) {
  const Index n = z.rows();
  Matrix centers(k, z.cols());
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  Index first = static_cast<Index>(rng() % static_cast<std::uint64_t>(n));
  centers.row(0) = z.row(first);
  taken[static_cast<std::size_t>(first)] = 1;
  Eigen::VectorXd d2 = (z.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index pick = -1;
    if (total > 0.0) {
      const double target = unit_draw(rng) * total;
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc > target && d2(i) > 0.0) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {
        for (Index i = n - 1; i >= 0; --i) {
          if (d2(i) > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      // All remaining points coincide with a center; take the next free index.
      std::vector<Index> free;
      for (Index i = 0; i < n; ++i) {
        if (!taken[static_cast<std::size_t>(i)]) free.push_back(i);
      }
      pick = free[static_cast<std::size_t>(rng() % free.size())];
    }
    centers.row(c) = z.row(pick);
    taken[static_cast<std::size_t>(pick)] = 1;
    d2 = d2.cwiseMin((z.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

struct LloydRun {
  std::vector<int> labels;
  Matrix centers;
  double inertia = 0.0;
  int iterations = 0;
  std::vector<double> trace;
};

inline LloydRun lloyd(const Matrix& z, Matrix centers, int max_iter) {
  const Index n = z.rows();
  const int k = static_cast<int>(centers.rows());
  LloydRun run;
  run.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);

  auto assign = [&]() {
    bool changed = false;
    double inertia = 0.0;
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (z.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      auto& slot = run.labels[static_cast<std::size_t>(i)];
      if (slot != best) changed = true;
      slot = best;
      dist[static_cast<std::size_t>(i)] = best_d;
      inertia += best_d;
    }
    return std::pair{changed, inertia};
  };

  auto [changed, inertia] = assign();
  (void)changed;
  run.trace.push_back(inertia);
  for (run.iterations = 0; run.iterations < max_iter; ++run.iterations) {
    // Update step
    Matrix sums = Matrix::Zero(k, z.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      const int c = run.labels[static_cast<std::size_t>(i)];
      sums.row(c) += z.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      // Empty cluster: move in the point farthest from its center, taken from
      // a cluster that keeps at least one member.
      Index far = -1;
      for (Index i = 0; i < n; ++i) {
        const int owner = run.labels[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(owner)] < 2) continue;
        if (far < 0 || dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)]) far = i;
      }
      if (far < 0) continue;
      --counts[static_cast<std::size_t>(run.labels[static_cast<std::size_t>(far)])];
      run.labels[static_cast<std::size_t>(far)] = c;
      counts[static_cast<std::size_t>(c)] = 1;
      dist[static_cast<std::size_t>(far)] = 0.0;
      centers.row(c) = z.row(far);
    }
    auto [moved, next_inertia] = assign();
    run.trace.push_back(next_inertia);
    inertia = next_inertia;
    if (!moved) {
      ++run.iterations;
      break;
    }
  }
  run.centers = std::move(centers);
  run.inertia = inertia;
  return run;
}

}  // namespace detail

/// Lloyd's k-means with k-means++ seeding; best of `restarts` by inertia,
/// ties to the lowest restart index.
inline KMeansResult kmeans(const Matrix& z, int k, std::uint64_t seed, KMeansOptions opts = {}) {
  const Index n = z.rows();
  detail::require(k >= 2, "kmeans: k must be >= 2");
  detail::require(k <= n, "kmeans: k = " + std::to_string(k) + " exceeds the point count " + std::to_string(n));
  detail::require(opts.restarts >= 1 && opts.max_iter >= 1, "kmeans: restarts and max_iter must be >= 1");

  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < opts.restarts; ++r) {
    detail::LloydRun run = detail::lloyd(z, detail::kmeanspp_seed(z, k, rng), opts.max_iter);
    if (run.inertia < best.inertia) {
      best.partition.labels = std::move(run.labels);
      best.partition.k = k;
      best.centers = std::move(run.centers);
      best.inertia = run.inertia;
      best.iterations = run.iterations;
      best.best_restart = r;
      best.inertia_trace = std::move(run.trace);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Partition agreement

namespace detail {

struct Contingency {
  std::vector<std::vector<double>> table;
  std::vector<double> rows;
  std::vector<double> cols;
  double n = 0.0;
};

inline std::vector<int> dense_labels(std::span<const int> labels) {
  std::map<int, int> ids;
  for (int l : labels) ids.emplace(l, 0);
  int next = 0;
  for (auto& [label, id] : ids) id = next++;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(ids.at(l));
  return out;
}

inline Contingency contingency(std::span<const int> a, std::span<const int> b) {
  require(a.size() == b.size(), "partition comparison: lengths differ (" + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
  const auto da = dense_labels(a);
  const auto db = dense_labels(b);
  const int ka = da.empty() ? 0 : *std::max_element(da.begin(), da.end()) + 1;
  const int kb = db.empty() ? 0 : *std::max_element(db.begin(), db.end()) + 1;
  Contingency c;
  c.table.assign(static_cast<std::size_t>(ka), std::vector<double>(static_cast<std::size_t>(kb), 0.0));
  c.rows.assign(static_cast<std::size_t>(ka), 0.0);
  c.cols.assign(static_cast<std::size_t>(kb), 0.0);
  for (std::size_t i = 0; i < da.size(); ++i) {
    c.table[static_cast<std::size_t>(da[i])][static_cast<std::size_t>(db[i])] += 1.0;
    c.rows[static_cast<std::size_t>(da[i])] += 1.0;
    c.cols[static_cast<std::size_t>(db[i])] += 1.0;
  }
  c.n = static_cast<double>(da.size());
  return c;
}

inline double choose2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace detail

/// Adjusted Rand index (contingency-table form with expected-index correction).
/// Two partitions that are both a single cluster, or both all singletons,
/// score 1.
inline double ari(std::span<const int> a, std::span<const int> b) {
  const auto c = detail::contingency(a, b);
  double index = 0.0;
  for (const auto& row : c.table) {
    for (double v : row) index += detail::choose2(v);
  }
  double sum_a = 0.0;
  double sum_b = 0.0;
  for (double v : c.rows) sum_a += detail::choose2(v);
  for (double v : c.cols) sum_b += detail::choose2(v);
  const double total = detail::choose2(c.n);
  if (total == 0.0) return 1.0;
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

inline double ari(const Partition& a, const Partition& b) { return ari(a.labels, b.labels); }

/// Mutual information normalized by the arithmetic mean of the two entropies.
/// Two single-cluster partitions score 1.
inline double nmi(std::span<const int> a, std::span<const int> b) {
  const auto c = detail::contingency(a, b);
  if (c.n == 0.0) return 1.0;
  auto entropy = [&](const std::vector<double>& counts) {
    double h = 0.0;
    for (double v : counts) {
      if (v > 0.0) h -= (v / c.n) * std::log(v / c.n);
    }
    return h;
  };
  const double ha = entropy(c.rows);
  const double hb = entropy(c.cols);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < c.table.size(); ++i) {
    for (std::size_t j = 0; j < c.table[i].size(); ++j) {
      const double v = c.table[i][j];
      if (v > 0.0) mi += (v / c.n) * std::log(v * c.n / (c.rows[i] * c.cols[j]));
    }
  }
  return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

inline double nmi(const Partition& a, const Partition& b) { return nmi(a.labels, b.labels); }

// ---------------------------------------------------------------------------
// Baseline

/// Projects centered rows onto the top principal axes.
inline Matrix pca(const Matrix& x, Index components) {
  detail::require(components >= 1 && components <= x.cols(), "pca: bad component count");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / std::max<double>(1.0, static_cast<double>(x.rows() - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues ascend; keep the last columns, largest first.
  Eigen::MatrixXd axes = eig.eigenvectors().rightCols(components).rowwise().reverse();
  // Fix each axis' sign so its largest-magnitude loading is positive.
  for (Index c = 0; c < axes.cols(); ++c) {
    Index arg = 0;
    axes.col(c).cwiseAbs().maxCoeff(&arg);
    if (axes(arg, c) < 0.0) axes.col(c) *= -1.0;
  }
  return centered * axes;
}

/// PCA followed by k-means: the expression-only reference clustering.
inline KMeansResult pca_kmeans_baseline(const Matrix& x, int k, std::uint64_t seed, Index components = 30,
                                        KMeansOptions opts = {}) {
  return kmeans(pca(x, std::min(components, x.cols())), k, seed, opts);
}

}  // namespace stmfg

#endif  // STMFG_CLUSTER_HPP
