#ifndef STMFG_SPARSE_HPP
#define STMFG_SPARSE_HPP

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stmfg/errors.hpp"

namespace stmfg {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SparseEntry {
  Index row = 0;
  Index col = 0;
  double value = 0.0;

  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

/// Square sparse matrix in coordinate form, kept sorted by (row, col) with a
/// row-pointer index for compressed-row traversal.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  SparseMatrix(Index n, std::vector<SparseEntry> entries, bool symmetric)
      : n_(n), entries_(std::move(entries)), symmetric_(symmetric) {
    detail::require(n_ >= 0, "SparseMatrix: negative size");
    std::sort(entries_.begin(), entries_.end(), [](const SparseEntry& a, const SparseEntry& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      const auto& e = entries_[k];
      if (e.row < 0 || e.row >= n_ || e.col < 0 || e.col >= n_) {
        throw ContractError("SparseMatrix: entry (" + std::to_string(e.row) + ", " +
                            std::to_string(e.col) + ") out of range for n = " + std::to_string(n_));
      }
      if (k > 0 && entries_[k - 1].row == e.row && entries_[k - 1].col == e.col) {
        throw ContractError("SparseMatrix: duplicate entry (" + std::to_string(e.row) + ", " +
                            std::to_string(e.col) + ")");
      }
    }
    row_ptr_.assign(static_cast<std::size_t>(n_) + 1, 0);
    for (const auto& e : entries_) ++row_ptr_[static_cast<std::size_t>(e.row) + 1];
    for (std::size_t i = 0; i < static_cast<std::size_t>(n_); ++i) row_ptr_[i + 1] += row_ptr_[i];
    if (symmetric_) {
      for (const auto& e : entries_) {
        const auto* mirror = find(e.col, e.row);
        if (mirror == nullptr || mirror->value != e.value) {
          throw ContractError("SparseMatrix: flagged symmetric but (" + std::to_string(e.col) + ", " +
                              std::to_string(e.row) + ") does not mirror (" + std::to_string(e.row) +
                              ", " + std::to_string(e.col) + ")");
        }
      }
    }
  }

  static SparseMatrix identity(Index n) {
    std::vector<SparseEntry> entries;
    entries.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) entries.push_back({i, i, 1.0});
    return SparseMatrix(n, std::move(entries), true);
  }

  Index n() const { return n_; }
  std::size_t nnz() const { return entries_.size(); }
  bool symmetric() const { return symmetric_; }
  const std::vector<SparseEntry>& entries() const { return entries_; }

  /// Entries of row i, sorted by column.
  std::span<const SparseEntry> row(Index i) const {
    return {entries_.data() + row_ptr_[static_cast<std::size_t>(i)],
            entries_.data() + row_ptr_[static_cast<std::size_t>(i) + 1]};
  }

  const SparseEntry* find(Index i, Index j) const {
    auto r = row(i);
    auto it = std::lower_bound(r.begin(), r.end(), j,
                               [](const SparseEntry& e, Index col) { return e.col < col; });
    return (it != r.end() && it->col == j) ? &*it : nullptr;
  }

  bool contains(Index i, Index j) const { return find(i, j) != nullptr; }

  double at(Index i, Index j) const {
    const auto* e = find(i, j);
    return e ? e->value : 0.0;
  }

  std::size_t degree(Index i) const { return row(i).size(); }

  Matrix to_dense() const {
    Matrix d = Matrix::Zero(n_, n_);
    for (const auto& e : entries_) d(e.row, e.col) = e.value;
    return d;
  }

  /// Dense operand product S * d.
  Matrix multiply(const Matrix& d) const {
    detail::require_dims(d.rows() == n_, "spmm: sparse size " + std::to_string(n_) +
                                             " vs dense rows " + std::to_string(d.rows()));
    Matrix out = Matrix::Zero(n_, d.cols());
    for (Index i = 0; i < n_; ++i) {
      for (const auto& e : row(i)) out.row(i).noalias() += e.value * d.row(e.col);
    }
    return out;
  }

  /// Dense operand product S^T * d.
  Matrix multiply_transposed(const Matrix& d) const {
    detail::require_dims(d.rows() == n_, "spmm: sparse size " + std::to_string(n_) +
                                             " vs dense rows " + std::to_string(d.rows()));
    Matrix out = Matrix::Zero(n_, d.cols());
    for (const auto& e : entries_) out.row(e.col).noalias() += e.value * d.row(e.row);
    return out;
  }

 private:
  Index n_ = 0;
  std::vector<SparseEntry> entries_;
  std::vector<std::size_t> row_ptr_{0};
  bool symmetric_ = false;
};

}  // namespace stmfg

#endif  // STMFG_SPARSE_HPP
