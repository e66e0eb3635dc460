#ifndef STMFG_TENSOR_HPP
#define STMFG_TENSOR_HPP

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tensor is a cheap handle to a node in a differentiation graph. Ops build
// new nodes; nodes whose inputs are all constants carry no backward rule and
// keep no parents, so evaluation-only code pays nothing for the graph.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stmfg/errors.hpp"
#include "stmfg/sparse.hpp"
#include "stmfg/special.hpp"

namespace stmfg {

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }

  Matrix& ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
      grad = Matrix::Zero(value.rows(), value.cols());
    }
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() : node_(std::make_shared<detail::Node>()) {}

  static Tensor constant(Matrix value) {
    Tensor t;
    t.node_->value = std::move(value);
    return t;
  }

  static Tensor parameter(Matrix value) {
    Tensor t = constant(std::move(value));
    t.node_->requires_grad = true;
    return t;
  }

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false) {
    Tensor t = constant(Matrix::Zero(rows, cols));
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }

  const Matrix& value() const { return node_->value; }

  /// In-place access for optimizers and finite-difference probes. Leaves only.
  Matrix& mutable_value() {
    detail::require(node_->is_leaf(), "mutable_value: tensor is not a leaf");
    return node_->value;
  }

  /// Accumulated gradient; zeros when nothing has been accumulated yet.
  const Matrix& grad() const { return node_->ensure_grad(); }

  bool has_grad() const {
    return node_->grad.rows() == rows() && node_->grad.cols() == cols() && size() > 0;
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf(); }

  void zero_grad() {
    if (node_->requires_grad) node_->grad = Matrix::Zero(rows(), cols());
  }

  double item() const {
    detail::require(rows() == 1 && cols() == 1, "item: tensor is not 1x1");
    return node_->value(0, 0);
  }

  double operator()(Index r, Index c) const { return node_->value(r, c); }

  bool all_finite() const { return node_->value.allFinite(); }

  /// Constant copy that shares no graph history.
  Tensor detach() const { return constant(node_->value); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(),
               std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// Wraps a computed value into a graph node. The backward rule receives the
// output node (whose grad is populated) and accumulates into its parents.
inline Tensor make_result(Matrix value, std::initializer_list<Tensor> inputs,
                          std::function<void(Node&)> backward) {
  Tensor out = Tensor::constant(std::move(value));
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& in : inputs) node.parents.push_back(in.node());
  node.backward_fn = std::move(backward);
  return out;
}

// Gradient sink for parent i, or nullptr when it does not need one.
inline Matrix* sink(Node& self, std::size_t i) {
  auto& p = *self.parents[i];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

inline const Matrix& parent_value(const Node& self, std::size_t i) { return self.parents[i]->value; }

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_dims(a.cols() == b.rows(),
                       "matmul: " + detail::shape_str(a) + " * " + detail::shape_str(b));
  Matrix v = a.value() * b.value();
  return detail::make_result(std::move(v), {a, b}, [](detail::Node& self) {
    const Matrix& g = self.grad;
    if (auto* da = detail::sink(self, 0)) da->noalias() += g * detail::parent_value(self, 1).transpose();
    if (auto* db = detail::sink(self, 1)) db->noalias() += detail::parent_value(self, 0).transpose() * g;
  });
}

/// Sparse-dense product. The sparse operand is a constant; gradient flows to d only.
inline Tensor spmm(const SparseMatrix& s, const Tensor& d) {
  Matrix v = s.multiply(d.value());
  return detail::make_result(std::move(v), {d}, [s = std::make_shared<const SparseMatrix>(s)](detail::Node& self) {
    if (auto* dd = detail::sink(self, 0)) *dd += s->multiply_transposed(self.grad);
  });
}

inline Tensor transpose(const Tensor& t) {
  Matrix v = t.value().transpose();
  return detail::make_result(std::move(v), {t}, [](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) *d += self.grad.transpose();
  });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Matrix v = a.value() + b.value();
  return detail::make_result(std::move(v), {a, b}, [](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) *d += self.grad;
    if (auto* d = detail::sink(self, 1)) *d += self.grad;
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Matrix v = a.value() - b.value();
  return detail::make_result(std::move(v), {a, b}, [](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) *d += self.grad;
    if (auto* d = detail::sink(self, 1)) *d -= self.grad;
  });
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "hadamard");
  Matrix v = a.value().cwiseProduct(b.value());
  return detail::make_result(std::move(v), {a, b}, [](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) *d += self.grad.cwiseProduct(detail::parent_value(self, 1));
    if (auto* d = detail::sink(self, 1)) *d += self.grad.cwiseProduct(detail::parent_value(self, 0));
  });
}

inline Tensor scale(const Tensor& t, double c) {
  Matrix v = t.value() * c;
  return detail::make_result(std::move(v), {t}, [c](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) *d += self.grad * c;
  });
}

inline Tensor add_scalar(const Tensor& t, double c) {
  Matrix v = t.value().array() + c;
  return detail::make_result(std::move(v), {t}, [](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) *d += self.grad;
  });
}

inline Tensor relu(const Tensor& t) {
  Matrix v = t.value().cwiseMax(0.0);
  return detail::make_result(std::move(v), {t}, [](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) {
      *d += (detail::parent_value(self, 0).array() > 0.0).select(self.grad, 0.0).matrix();
    }
  });
}

inline Tensor leaky_relu(const Tensor& t, double slope) {
  Matrix v = (t.value().array() > 0.0).select(t.value(), slope * t.value().array()).matrix();
  return detail::make_result(std::move(v), {t}, [slope](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) {
      *d += (detail::parent_value(self, 0).array() > 0.0)
                .select(self.grad, slope * self.grad.array())
                .matrix();
    }
  });
}

inline Tensor sigmoid(const Tensor& t) {
  Matrix v = t.value().unaryExpr([](double x) { return detail::stable_sigmoid(x); });
  return detail::make_result(std::move(v), {t}, [](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) {
      const auto s = self.value.array();
      *d += (self.grad.array() * s * (1.0 - s)).matrix();
    }
  });
}

inline Tensor exp(const Tensor& t) {
  // Scalar std::exp everywhere, so equal inputs give bitwise-equal outputs
  // regardless of vectorization.
  Matrix v = t.value().unaryExpr([](double x) { return std::exp(x); });
  return detail::make_result(std::move(v), {t}, [](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) *d += self.grad.cwiseProduct(self.value);
  });
}

inline Tensor log(const Tensor& t) {
  if (!(t.value().array() > 0.0).all()) throw DomainError("log: non-positive input");
  Matrix v = t.value().unaryExpr([](double x) { return std::log(x); });
  return detail::make_result(std::move(v), {t}, [](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) *d += self.grad.cwiseQuotient(detail::parent_value(self, 0));
  });
}

inline Tensor softplus(const Tensor& t) {
  Matrix v = t.value().unaryExpr([](double x) { return detail::stable_softplus(x); });
  return detail::make_result(std::move(v), {t}, [](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) {
      *d += self.grad.cwiseProduct(
          detail::parent_value(self, 0).unaryExpr([](double x) { return detail::stable_sigmoid(x); }));
    }
  });
}

/// log Gamma(x) for x > 0; the backward rule is the digamma function.
inline Tensor lgamma(const Tensor& t) {
  if (!(t.value().array() > 0.0).all()) throw DomainError("lgamma: non-positive input");
  Matrix v = t.value().unaryExpr([](double x) { return log_gamma(x); });
  return detail::make_result(std::move(v), {t}, [](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) {
      *d += self.grad.cwiseProduct(
          detail::parent_value(self, 0).unaryExpr([](double x) { return digamma(x); }));
    }
  });
}

/// Clamp to [lo, hi]; gradient is zero where the clamp is active.
inline Tensor clamp(const Tensor& t, double lo, double hi) {
  detail::require(lo <= hi, "clamp: lo > hi");
  Matrix v = t.value().cwiseMax(lo).cwiseMin(hi);
  return detail::make_result(std::move(v), {t}, [lo, hi](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) {
      const auto x = detail::parent_value(self, 0).array();
      *d += ((x >= lo) && (x <= hi)).select(self.grad, 0.0).matrix();
    }
  });
}

/// Elementwise max(a, b); ties route the gradient to a.
inline Tensor maximum(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "maximum");
  Matrix v = a.value().cwiseMax(b.value());
  return detail::make_result(std::move(v), {a, b}, [](detail::Node& self) {
    const auto take_a = detail::parent_value(self, 0).array() >= detail::parent_value(self, 1).array();
    if (auto* d = detail::sink(self, 0)) *d += take_a.select(self.grad, 0.0).matrix();
    if (auto* d = detail::sink(self, 1)) *d += take_a.select(0.0, self.grad).matrix();
  });
}

// ---------------------------------------------------------------------------
// Shape and broadcast

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  detail::require_dims(a.rows() == b.rows(),
                       "concat_cols: " + detail::shape_str(a) + " | " + detail::shape_str(b));
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const Index ca = a.cols();
  const Index cb = b.cols();
  return detail::make_result(std::move(v), {a, b}, [ca, cb](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) *d += self.grad.leftCols(ca);
    if (auto* d = detail::sink(self, 1)) *d += self.grad.rightCols(cb);
  });
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
  detail::require_dims(a.cols() == b.cols(),
                       "concat_rows: " + detail::shape_str(a) + " / " + detail::shape_str(b));
  Matrix v(a.rows() + b.rows(), a.cols());
  v << a.value(), b.value();
  const Index ra = a.rows();
  const Index rb = b.rows();
  return detail::make_result(std::move(v), {a, b}, [ra, rb](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) *d += self.grad.topRows(ra);
    if (auto* d = detail::sink(self, 1)) *d += self.grad.bottomRows(rb);
  });
}

/// Adds a 1 x c row vector to every row of t.
inline Tensor add_row(const Tensor& t, const Tensor& row) {
  detail::require_dims(row.rows() == 1 && row.cols() == t.cols(),
                       "add_row: " + detail::shape_str(t) + " + " + detail::shape_str(row));
  Matrix v = t.value().rowwise() + row.value().row(0);
  return detail::make_result(std::move(v), {t, row}, [](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) *d += self.grad;
    if (auto* d = detail::sink(self, 1)) *d += self.grad.colwise().sum();
  });
}

/// Multiplies row i of t by w(i, 0).
inline Tensor scale_rows(const Tensor& t, const Tensor& w) {
  detail::require_dims(w.cols() == 1 && w.rows() == t.rows(),
                       "scale_rows: " + detail::shape_str(t) + " by " + detail::shape_str(w));
  Matrix v = t.value().array().colwise() * w.value().col(0).array();
  return detail::make_result(std::move(v), {t, w}, [](detail::Node& self) {
    const Matrix& tv = detail::parent_value(self, 0);
    const Matrix& wv = detail::parent_value(self, 1);
    if (auto* d = detail::sink(self, 0)) *d += (self.grad.array().colwise() * wv.col(0).array()).matrix();
    if (auto* d = detail::sink(self, 1)) *d += self.grad.cwiseProduct(tv).rowwise().sum();
  });
}

inline Tensor column(const Tensor& t, Index j) {
  detail::require_dims(j >= 0 && j < t.cols(), "column: index out of range");
  Matrix v = t.value().col(j);
  return detail::make_result(std::move(v), {t}, [j](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) d->col(j) += self.grad.col(0);
  });
}

/// Picks the listed (row, col) entries into a K x 1 column.
inline Tensor gather(const Tensor& t, std::vector<std::pair<Index, Index>> at) {
  Matrix v(static_cast<Index>(at.size()), 1);
  for (std::size_t k = 0; k < at.size(); ++k) {
    const auto [r, c] = at[k];
    detail::require_dims(r >= 0 && r < t.rows() && c >= 0 && c < t.cols(), "gather: index out of range");
    v(static_cast<Index>(k), 0) = t.value()(r, c);
  }
  return detail::make_result(std::move(v), {t}, [at = std::move(at)](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) {
      for (std::size_t k = 0; k < at.size(); ++k) (*d)(at[k].first, at[k].second) += self.grad(static_cast<Index>(k), 0);
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum_all(const Tensor& t) {
  Matrix v = Matrix::Constant(1, 1, t.value().sum());
  return detail::make_result(std::move(v), {t}, [](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) d->array() += self.grad(0, 0);
  });
}

inline Tensor mean_all(const Tensor& t) {
  detail::require(t.size() > 0, "mean_all: empty tensor");
  return scale(sum_all(t), 1.0 / static_cast<double>(t.size()));
}

/// Row sums as an N x 1 column.
inline Tensor sum_rows(const Tensor& t) {
  Matrix v = t.value().rowwise().sum();
  return detail::make_result(std::move(v), {t}, [](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) *d += self.grad.col(0).replicate(1, d->cols());
  });
}

/// Row sums of a square matrix with the diagonal left out, as an N x 1 column.
inline Tensor sum_rows_offdiag(const Tensor& t) {
  detail::require_dims(t.rows() == t.cols(), "sum_rows_offdiag: matrix is not square");
  const Matrix& x = t.value();
  Matrix v = Matrix::Zero(x.rows(), 1);
  for (Index i = 0; i < x.rows(); ++i) {
    double acc = 0.0;
    for (Index j = 0; j < x.cols(); ++j) {
      if (j != i) acc += x(i, j);
    }
    v(i, 0) = acc;
  }
  return detail::make_result(std::move(v), {t}, [](detail::Node& self) {
    if (auto* d = detail::sink(self, 0)) {
      *d += self.grad.col(0).replicate(1, d->cols());
      d->diagonal() -= self.grad.col(0);
    }
  });
}

// ---------------------------------------------------------------------------
// Row-wise normalizations

inline constexpr double kNormEpsilon = 1e-12;

/// Divides each row by max(||row||, eps); zero rows stay zero.
inline Tensor row_l2_normalize(const Tensor& t, double eps = kNormEpsilon) {
  Eigen::VectorXd norms = t.value().rowwise().norm().cwiseMax(eps);
  Matrix v = t.value().array().colwise() / norms.array();
  return detail::make_result(std::move(v), {t}, [norms = std::move(norms), eps](detail::Node& self) {
    auto* d = detail::sink(self, 0);
    if (d == nullptr) return;
    const Matrix& y = self.value;
    const Matrix& x = detail::parent_value(self, 0);
    for (Index i = 0; i < y.rows(); ++i) {
      if (x.row(i).norm() > eps) {
        const double proj = y.row(i).dot(self.grad.row(i));
        d->row(i) += (self.grad.row(i) - proj * y.row(i)) / norms(i);
      } else {
        d->row(i) += self.grad.row(i) / eps;
      }
    }
  });
}

inline Tensor softmax_rows(const Tensor& t) {
  Matrix v = t.value();
  for (Index i = 0; i < v.rows(); ++i) {
    const double m = v.row(i).maxCoeff();
    v.row(i) = (v.row(i).array() - m).exp().matrix();
    v.row(i) /= v.row(i).sum();
  }
  return detail::make_result(std::move(v), {t}, [](detail::Node& self) {
    auto* d = detail::sink(self, 0);
    if (d == nullptr) return;
    const Matrix& y = self.value;
    const Eigen::VectorXd dots = self.grad.cwiseProduct(y).rowwise().sum();
    *d += (y.array() * (self.grad.array().colwise() - dots.array())).matrix();
  });
}

/// Pairwise cosine similarities of the rows of z (N x N), with the same
/// epsilon guard as row_l2_normalize. Rounding excursions past +-1 are clamped.
inline Tensor cosine_similarity_matrix(const Tensor& z) {
  detail::require_dims(z.cols() >= 1, "cosine_similarity_matrix: zero columns");
  const Tensor u = row_l2_normalize(z);
  return clamp(matmul(u, transpose(u)), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Differentiation

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires
/// gradients. Intermediate gradients are recomputed from scratch on every
/// call; leaf gradients accumulate until zero_grad().
inline void backward(const Tensor& loss) {
  detail::require(loss.rows() == 1 && loss.cols() == 1,
                  "backward: loss must be a scalar, got " + detail::shape_str(loss));
  if (!loss.requires_grad()) return;

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Each pass collects into fresh buffers; leaves then add the pass total to
  // what they held, so repeated passes accumulate exactly.
  std::vector<std::pair<detail::Node*, Matrix>> held;
  for (auto* node : order) {
    if (node->is_leaf() && node->grad.size() > 0) held.emplace_back(node, std::move(node->grad));
    node->grad = Matrix::Zero(node->value.rows(), node->value.cols());
  }
  loss.node()->grad(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
  }
  for (auto& [node, previous] : held) node->grad += previous;
}

/// Compares the AD gradient of scalar f at x with central differences.
/// Returns max_i |ad_i - fd_i| / max(|ad_i|, |fd_i|, 1e-8).
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps = 1e-5) {
  detail::require(x.is_leaf() && x.requires_grad(), "grad_check: x must be a parameter leaf");
  x.zero_grad();
  backward(f(x));
  const Matrix ad = x.grad();
  x.zero_grad();

  double worst = 0.0;
  Matrix& v = x.mutable_value();
  for (Index k = 0; k < v.size(); ++k) {
    double& slot = v.data()[k];
    const double saved = slot;
    slot = saved + eps;
    const double up = f(x).item();
    slot = saved - eps;
    const double down = f(x).item();
    slot = saved;
    const double fd = (up - down) / (2.0 * eps);
    const double a = ad.data()[k];
    const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
    worst = std::max(worst, std::abs(a - fd) / denom);
  }
  return worst;
}

}  // namespace stmfg

#endif  // STMFG_TENSOR_HPP
