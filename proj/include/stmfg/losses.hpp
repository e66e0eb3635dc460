#ifndef STMFG_LOSSES_HPP
#define STMFG_LOSSES_HPP

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "stmfg/errors.hpp"
#include "stmfg/sparse.hpp"
#include "stmfg/special.hpp"
#include "stmfg/tensor.hpp"

namespace stmfg {

// ---------------------------------------------------------------------------
// Cross-view contrastive loss

namespace detail {

// Raw Gram matrix; callers clamp to [-1, 1] and zero the gradient wherever
// the clamp was active.
inline Matrix gram(const Matrix& u) {
  Matrix s(u.rows(), u.rows());
  s.noalias() = u * u.transpose();
  return s;
}

inline double clamp_unit(double v) { return v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v); }

inline bool inside_unit(double v) { return v >= -1.0 && v <= 1.0; }

// Contrastive objective on the 2N unit rows of u = [z_s; z_f] (normalized).
inline Tensor contrastive_from_unit_rows(const Tensor& u, double tau) {
  const Index two_n = u.rows();
  const Index n = two_n / 2;
  const double inv_tau = 1.0 / tau;
  const double self_exp = std::exp(inv_tau);

  auto raw = std::make_shared<Matrix>(gram(u.value()));
  auto e = std::make_shared<Matrix>(raw->unaryExpr([&](double v) { return clamp_unit(v) * inv_tau; }));
  e->array() = e->array().exp();

  auto partner = [n](Index a) { return a < n ? a + n : a - n; };
  auto denom = std::make_shared<Eigen::VectorXd>(two_n);
  auto floored = std::make_shared<std::vector<char>>(static_cast<std::size_t>(two_n), 0);
  double acc = 0.0;
  for (Index a = 0; a < two_n; ++a) {
    double off = 0.0;
    for (Index k = 0; k < two_n; ++k) {
      if (k != a) off += (*e)(a, k);
    }
    // Self residual exp(C_aa / tau) - exp(1 / tau) is <= 0 since C_aa <= 1.
    const double den = off + std::min((*e)(a, a) - self_exp, 0.0);
    const double num = (*e)(a, partner(a));
    const bool use_num = den <= num;
    (*floored)[static_cast<std::size_t>(a)] = use_num ? 1 : 0;
    (*denom)(a) = use_num ? num : den;
    // A floored row contributes log(num / num), exactly zero with zero gradient.
    if (!use_num) acc += clamp_unit((*raw)(a, partner(a))) * inv_tau - std::log(den);
  }
  Matrix v = Matrix::Constant(1, 1, (0.0 - acc) / static_cast<double>(two_n));

  return make_result(std::move(v), {u}, [raw, e, denom, floored, inv_tau, n, partner](Node& self) {
    Matrix* du = sink(self, 0);
    if (du == nullptr) return;
    const Index two_n = 2 * n;
    const double scale = self.grad(0, 0) / static_cast<double>(two_n);
    // dL/dS, written over the exp buffer.
    Matrix& g = *e;
    for (Index a = 0; a < two_n; ++a) {
      const double w = scale * inv_tau / (*denom)(a);
      const Index p = partner(a);
      if ((*floored)[static_cast<std::size_t>(a)]) {
        g.row(a).setZero();
        continue;
      }
      g.row(a) *= w;
      g(a, p) -= scale * inv_tau;
    }
    for (Index k = 0; k < g.size(); ++k) {
      if (!inside_unit(raw->data()[k])) g.data()[k] = 0.0;
    }
    // dU = (G + G^T) U
    for (Index i = 0; i < two_n; ++i) {
      for (Index j = i + 1; j < two_n; ++j) {
        const double sym = g(i, j) + g(j, i);
        g(i, j) = sym;
        g(j, i) = sym;
      }
      g(i, i) *= 2.0;
    }
    du->noalias() += g * parent_value(self, 0);
  });
}

}  // namespace detail

/// Inter-view contrastive loss over paired spot embeddings.
///
/// Each row of z_s and z_f is an anchor whose positive is the same spot in the
/// other view. The denominator sums exp(sim / tau) over all 2N embeddings and
/// subtracts exp(1 / tau) for the anchor's self-similarity; it is floored at
/// the numerator so the log stays finite for near-zero rows. The result is
/// averaged over the 2N anchors.
inline Tensor contrastive_loss(const Tensor& z_s, const Tensor& z_f, double tau) {
  detail::require(tau > 0.0, "contrastive_loss: tau must be positive");
  detail::require_same_shape(z_s, z_f, "contrastive_loss");
  detail::require(z_s.rows() >= 1, "contrastive_loss: no spots");
  detail::require_dims(z_s.cols() >= 1, "contrastive_loss: zero-width embeddings");
  return detail::contrastive_from_unit_rows(row_l2_normalize(concat_rows(z_s, z_f)), tau);
}

// ---------------------------------------------------------------------------
// Spatial regularization

namespace detail {

inline Tensor spatial_reg_from_unit_rows(const Tensor& u, const SparseMatrix& a_s) {
  const Index n = u.rows();
  auto raw = std::make_shared<Matrix>(gram(u.value()));
  // sp = softplus(C); |C| <= 1 so the direct form cannot overflow.
  auto ex = std::make_shared<Matrix>(raw->unaryExpr([](double v) { return clamp_unit(v); }));
  ex->array() = ex->array().exp();
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (j != i) acc += std::log1p((*ex)(i, j));
    }
  }
  // -log s(c) = softplus(c) - c on neighbor pairs.
  for (const auto& e : a_s.entries()) acc -= clamp_unit((*raw)(e.row, e.col));
  Matrix v = Matrix::Constant(1, 1, acc);

  auto adjacency = std::make_shared<const SparseMatrix>(a_s);
  return make_result(std::move(v), {u}, [raw, ex, adjacency](Node& self) {
    Matrix* du = sink(self, 0);
    if (du == nullptr) return;
    const double g0 = self.grad(0, 0);
    Matrix& g = *ex;  // becomes dL/dC in place: sigmoid(C) - A off the diagonal
    g.array() = g0 * g.array() / (1.0 + g.array());
    g.diagonal().setZero();
    for (const auto& e : adjacency->entries()) g(e.row, e.col) -= g0;
    for (Index k = 0; k < g.size(); ++k) {
      if (!inside_unit(raw->data()[k])) g.data()[k] = 0.0;
    }
    // G is symmetric here, so (G + G^T) U = 2 G U.
    du->noalias() += 2.0 * (g * parent_value(self, 0));
  });
}

}  // namespace detail

/// -sum_i [ sum_{j in N(i)} log s(C_ij) + sum_{k not in N(i), k != i} log(1 - s(C_ik)) ]
/// with C the cosine-similarity matrix of z and s the logistic function.
///
/// Since |C| <= 1, s(C) stays within [0.26, 0.74]; the 1e-12 guard on the
/// logistic output never binds and is not applied.
inline Tensor spatial_reg_loss(const Tensor& z, const SparseMatrix& a_s) {
  detail::require_dims(a_s.n() == z.rows(), "spatial_reg_loss: graph size " + std::to_string(a_s.n()) +
                                                " vs " + std::to_string(z.rows()) + " spots");
  detail::require_dims(z.cols() >= 1, "spatial_reg_loss: zero-width embeddings");
  for (const auto& e : a_s.entries()) {
    detail::require(e.row != e.col, "spatial_reg_loss: adjacency has a self-loop");
    detail::require(e.value == 1.0, "spatial_reg_loss: adjacency must be binary");
  }
  detail::require(a_s.symmetric(), "spatial_reg_loss: adjacency must be symmetric");
  return detail::spatial_reg_from_unit_rows(row_l2_normalize(z), a_s);
}

// ---------------------------------------------------------------------------
// Zero-inflated negative binomial

namespace detail {

inline void check_zinb_domain(double pi, double mu, double theta) {
  if (!(pi >= 0.0 && pi < 1.0)) throw DomainError("zinb: pi must lie in [0, 1)");
  if (!(mu > 0.0)) throw DomainError("zinb: mu must be positive");
  if (!(theta > 0.0)) throw DomainError("zinb: theta must be positive");
}

inline double nb_log_pmf(double x, double mu, double theta) {
  const double log_total = std::log(theta + mu);
  if (x == 0.0) return theta * (std::log(theta) - log_total);
  return log_gamma(x + theta) - log_gamma(theta) - log_gamma(x + 1.0) +
         theta * (std::log(theta) - log_total) + x * (std::log(mu) - log_total);
}

// psi(x + t) - psi(t); a finite sum for small integer x.
inline double digamma_shift(double x, double t) {
  if (x <= 32.0 && x == std::floor(x)) {
    double acc = 0.0;
    for (int j = 0; j < static_cast<int>(x); ++j) acc += 1.0 / (t + j);
    return acc;
  }
  return digamma(x + t) - digamma(t);
}

inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace detail

/// log ZINB(x | pi, mu, theta), evaluated in log space.
inline double zinb_log_pmf(double x, double pi, double mu, double theta) {
  detail::check_zinb_domain(pi, mu, theta);
  if (!(x >= 0.0)) throw DomainError("zinb: count must be non-negative");
  const double lognb = detail::nb_log_pmf(x, mu, theta);
  const double log_keep = std::log1p(-pi);
  if (x == 0.0) {
    const double log_pi = pi > 0.0 ? std::log(pi) : -std::numeric_limits<double>::infinity();
    return detail::log_add_exp(log_pi, log_keep + lognb);
  }
  return log_keep + lognb;
}

/// ZINB probability mass pi * delta_0(x) + (1 - pi) * NB(x | mu, theta).
inline double zinb_pmf(double x, double pi, double mu, double theta) {
  detail::check_zinb_domain(pi, mu, theta);
  if (!(x >= 0.0) || x != std::floor(x)) throw DomainError("zinb_pmf: x must be a non-negative integer");
  const double nb = std::exp(detail::nb_log_pmf(x, mu, theta));
  return (x == 0.0 ? pi : 0.0) + (1.0 - pi) * nb;
}

/// Mean negative ZINB log-likelihood over all N x M entries.
///
/// Counts are constants. With allow_fractional the NB term is evaluated on
/// non-integer targets through its Gamma-function continuation.
inline Tensor zinb_nll(const Matrix& counts, const Tensor& pi, const Tensor& mu, const Tensor& theta,
                       bool allow_fractional = false) {
  detail::require_same_shape(pi, mu, "zinb_nll");
  detail::require_same_shape(pi, theta, "zinb_nll");
  detail::require_dims(counts.rows() == pi.rows() && counts.cols() == pi.cols(),
                       "zinb_nll: counts " + std::to_string(counts.rows()) + "x" + std::to_string(counts.cols()) +
                           " vs parameters " + detail::shape_str(pi));
  for (Index r = 0; r < counts.rows(); ++r) {
    for (Index c = 0; c < counts.cols(); ++c) {
      const double x = counts(r, c);
      if (!(x >= 0.0) || (!allow_fractional && x != std::floor(x))) {
        throw DataError("zinb_nll: count at (" + std::to_string(r) + ", " + std::to_string(c) +
                        ") is not a non-negative integer: " + std::to_string(x));
      }
    }
  }
  const Index total = counts.size();
  detail::require(total > 0, "zinb_nll: empty matrix");

  double acc = 0.0;
  for (Index k = 0; k < total; ++k) {
    acc -= zinb_log_pmf(counts.data()[k], pi.value().data()[k], mu.value().data()[k], theta.value().data()[k]);
  }
  Matrix v = Matrix::Constant(1, 1, acc / static_cast<double>(total));

  return detail::make_result(std::move(v), {pi, mu, theta}, [counts](detail::Node& self) {
    const double g = self.grad(0, 0) / static_cast<double>(counts.size());
    const Matrix& pv = detail::parent_value(self, 0);
    const Matrix& mv = detail::parent_value(self, 1);
    const Matrix& tv = detail::parent_value(self, 2);
    Matrix* dpi = detail::sink(self, 0);
    Matrix* dmu = detail::sink(self, 1);
    Matrix* dth = detail::sink(self, 2);
    for (Index k = 0; k < counts.size(); ++k) {
      const double x = counts.data()[k];
      const double p = pv.data()[k];
      const double m = mv.data()[k];
      const double t = tv.data()[k];
      const double tm = t + m;
      const double log_ratio = std::log(t) - std::log(tm);
      double d_pi = 0.0;
      double d_mu = 0.0;
      double d_th = 0.0;
      if (x == 0.0) {
        // l = -log(pi + (1 - pi) q), q = (t / (t + m))^t
        const double q = std::exp(t * log_ratio);
        const double mix = p + (1.0 - p) * q;
        const double w = (1.0 - p) * q / mix;  // -dl/dlog q
        d_pi = -(1.0 - q) / mix;
        d_mu = w * t / tm;
        d_th = -w * (log_ratio + m / tm);
      } else {
        d_pi = 1.0 / (1.0 - p);
        d_mu = -(x / m - (t + x) / tm);
        d_th = -(detail::digamma_shift(x, t) + log_ratio + (m - x) / tm);
      }
      if (dpi) dpi->data()[k] += g * d_pi;
      if (dmu) dmu->data()[k] += g * d_mu;
      if (dth) dth->data()[k] += g * d_th;
    }
  });
}

// ---------------------------------------------------------------------------
// Weighted objective

struct LossWeights {
  double alpha = 1.0;    // reconstruction
  double lambda = 0.001; // contrastive
  double gamma = 0.01;   // spatial regularization
};

struct LossBreakdown {
  double zinb = 0.0;
  double cl = 0.0;
  double reg = 0.0;
  double total = 0.0;
  LossWeights weights;
};

struct LossTerms {
  Tensor total;  // differentiable objective
  LossBreakdown breakdown;
};

/// alpha * zinb + lambda * cl + gamma * reg. Terms with zero weight are left
/// out of the graph, so they contribute nothing and receive no gradient.
inline LossTerms total_loss(const Tensor& zinb, const Tensor& cl, const Tensor& reg, const LossWeights& w) {
  detail::require(w.alpha >= 0.0 && w.lambda >= 0.0 && w.gamma >= 0.0, "total_loss: weights must be >= 0");
  LossTerms out;
  bool any = false;
  auto accumulate = [&](const Tensor& term, double weight) {
    if (weight == 0.0) return;
    const Tensor scaled = scale(term, weight);
    out.total = any ? add(out.total, scaled) : scaled;
    any = true;
  };
  accumulate(zinb, w.alpha);
  accumulate(cl, w.lambda);
  accumulate(reg, w.gamma);
  if (!any) out.total = Tensor::scalar(0.0);

  out.breakdown.zinb = zinb.item();
  out.breakdown.cl = cl.item();
  out.breakdown.reg = reg.item();
  out.breakdown.total = out.total.item();
  out.breakdown.weights = w;
  return out;
}

}  // namespace stmfg

#endif  // STMFG_LOSSES_HPP
