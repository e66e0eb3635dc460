#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <boost/math/special_functions/digamma.hpp>

#include "oracles.hpp"

using namespace stmfg;

namespace {

SparseMatrix random_binary_graph(Index n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution edge(p);
  std::vector<SparseEntry> e;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (edge(rng)) {
        e.push_back({i, j, 1.0});
        e.push_back({j, i, 1.0});
      }
  return SparseMatrix(n, std::move(e), true);
}

struct ZinbInstance {
  Matrix x, pi, mu, theta;
};

ZinbInstance random_zinb(Index r, Index c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::poisson_distribution<int> pois(3.0);
  ZinbInstance z{Matrix(r, c), Matrix(r, c), Matrix(r, c), Matrix(r, c)};
  for (Index k = 0; k < z.x.size(); ++k) {
    z.x.data()[k] = u(rng) < 0.3 ? 0.0 : pois(rng);
    z.pi.data()[k] = 0.02 + 0.9 * u(rng);
    z.mu.data()[k] = 0.1 + 8.0 * u(rng);
    z.theta.data()[k] = 0.2 + 5.0 * u(rng);
  }
  return z;
}

}  // namespace

// ---------------------------------------------------------------------------
// Contrastive

TEST(Contrastive, MatchesDoubleLoopOracle) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> n_of(1, 32), d_of(1, 8);
  const double taus[] = {0.1, 0.5, 1.0};
  for (int rep = 0; rep < 60; ++rep) {
    const Index n = n_of(rng), d = d_of(rng);
    const double tau = taus[rep % 3];
    const Matrix zs = oracle::random_matrix(n, d, rng);
    const Matrix zf = oracle::random_matrix(n, d, rng);
    const double got = contrastive_loss(Tensor::constant(zs), Tensor::constant(zf), tau).item();
    EXPECT_NEAR(got, oracle::contrastive(zs, zf, tau), 1e-10) << "n=" << n << " d=" << d << " tau=" << tau;
  }
}

TEST(Contrastive, SingleSpotIsExactlyZero) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    for (double tau : {0.1, 0.5, 1.0, 3.0}) {
      const Index d = 1 + rep % 8;
      const Tensor zs = Tensor::constant(oracle::random_matrix(1, d, rng));
      const Tensor zf = Tensor::constant(oracle::random_matrix(1, d, rng));
      EXPECT_EQ(contrastive_loss(zs, zf, tau).item(), 0.0);
    }
  }
}

TEST(Contrastive, NonNegativeSymmetricAndScaleInvariant) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix zs = oracle::random_matrix(12, 4, rng);
    const Matrix zf = oracle::random_matrix(12, 4, rng);
    const double base = contrastive_loss(Tensor::constant(zs), Tensor::constant(zf), 0.5).item();
    EXPECT_GE(base, 0.0);
    EXPECT_NEAR(contrastive_loss(Tensor::constant(zf), Tensor::constant(zs), 0.5).item(), base, 1e-12);
    Matrix scaled = zs;
    scaled.row(rep % 12) *= 3.0;
    EXPECT_NEAR(contrastive_loss(Tensor::constant(scaled), Tensor::constant(zf), 0.5).item(), base, 1e-10);
    Matrix all_scaled = zf;
    for (Index i = 0; i < 12; ++i) all_scaled.row(i) *= 0.1 + i;
    EXPECT_NEAR(contrastive_loss(Tensor::constant(zs), Tensor::constant(all_scaled), 0.5).item(), base, 1e-10);
  }
}

TEST(Contrastive, ZeroRowsStayFinite) {
  Matrix zs = Matrix::Zero(3, 2);
  zs(1, 0) = 1.0;
  Tensor a = Tensor::parameter(zs);
  Tensor b = Tensor::parameter(Matrix::Zero(3, 2));
  const Tensor l = contrastive_loss(a, b, 0.5);
  EXPECT_TRUE(std::isfinite(l.item()));
  EXPECT_GE(l.item(), 0.0);
  backward(l);
  EXPECT_TRUE(a.grad().allFinite());
}

TEST(Contrastive, GradientsPassFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix other = oracle::random_matrix(7, 3, rng);
    Tensor zs = Tensor::parameter(oracle::random_matrix(7, 3, rng));
    const double tau = seed % 2 ? 0.5 : 0.2;
    EXPECT_LT(grad_check([&](const Tensor& x) { return contrastive_loss(x, Tensor::constant(other), tau); }, zs), 1e-4);
    Tensor zf = Tensor::parameter(oracle::random_matrix(7, 3, rng));
    EXPECT_LT(grad_check([&](const Tensor& x) { return contrastive_loss(Tensor::constant(other), x, tau); }, zf), 1e-4);
    Tensor shared = Tensor::parameter(oracle::random_matrix(7, 3, rng));
    EXPECT_LT(grad_check([&](const Tensor& x) { return contrastive_loss(x, relu(x), tau); }, shared), 1e-4);
  }
}

TEST(Contrastive, Contracts) {
  EXPECT_THROW(contrastive_loss(Tensor::zeros(2, 2), Tensor::zeros(2, 2), 0.0), ContractError);
  EXPECT_THROW(contrastive_loss(Tensor::zeros(2, 2), Tensor::zeros(3, 2), 0.5), DimensionError);
}

// ---------------------------------------------------------------------------
// Spatial regularization

TEST(SpatialReg, TwoSpotClosedForms) {
  Matrix z(2, 2);
  z << 1, 0, 0, 1;
  const SparseMatrix edge(2, {{0, 1, 1.0}, {1, 0, 1.0}}, true);
  EXPECT_NEAR(spatial_reg_loss(Tensor::constant(z), edge).item(), -2.0 * std::log(0.5), 1e-15);
  EXPECT_NEAR(spatial_reg_loss(Tensor::constant(z), edge).item(), 1.3863, 1e-4);
  EXPECT_NEAR(spatial_reg_loss(Tensor::constant(z), SparseMatrix(2, {}, true)).item(), -2.0 * std::log(0.5), 1e-15);
}

TEST(SpatialReg, OrthogonalRowsGiveClosedForm) {
  const Index n = 6;
  const Matrix z = Matrix::Identity(n, n);
  std::mt19937_64 rng(4);
  const double got = spatial_reg_loss(Tensor::constant(z), random_binary_graph(n, 0.4, rng)).item();
  EXPECT_NEAR(got, -static_cast<double>(n * n - n) * std::log(0.5), 1e-12);
}

TEST(SpatialReg, MatchesDoubleLoopOracle) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 30; ++rep) {
    const Index n = 1 + rep % 20;
    const Matrix z = oracle::random_matrix(n, 1 + rep % 5, rng);
    const SparseMatrix a = random_binary_graph(n, 0.3, rng);
    const double got = spatial_reg_loss(Tensor::constant(z), a).item();
    EXPECT_NEAR(got, oracle::spatial_reg(z, oracle::dense(a)), 1e-10) << "n=" << n;
    EXPECT_GE(got, 0.0);
  }
}

TEST(SpatialReg, GradientsPassFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed + 40);
    const SparseMatrix a = random_binary_graph(9, 0.3, rng);
    Tensor z = Tensor::parameter(oracle::random_matrix(9, 4, rng));
    EXPECT_LT(grad_check([&](const Tensor& x) { return spatial_reg_loss(x, a); }, z), 1e-4);
  }
}

TEST(SpatialReg, Contracts) {
  EXPECT_THROW(spatial_reg_loss(Tensor::zeros(3, 2), SparseMatrix(2, {}, true)), DimensionError);
  EXPECT_THROW(spatial_reg_loss(Tensor::zeros(2, 2), SparseMatrix(2, {{0, 0, 1.0}}, true)), ContractError);
  EXPECT_THROW(spatial_reg_loss(Tensor::zeros(2, 2), SparseMatrix(2, {{0, 1, 0.5}, {1, 0, 0.5}}, true)),
               ContractError);
}

// ---------------------------------------------------------------------------
// ZINB

TEST(Zinb, PmfExamples) {
  EXPECT_NEAR(zinb_pmf(0, 0.5, 1, 1), 0.75, 1e-15);
  EXPECT_NEAR(zinb_pmf(3, 0.5, 2.5, 1.7), 0.5 * zinb_pmf(3, 0.0, 2.5, 1.7), 1e-16);
  EXPECT_NEAR(zinb_pmf(3, 0.0, 2.5, 1.7), oracle::zinb_pmf(3, 0.0, 2.5, 1.7), 1e-14);
}

TEST(Zinb, PmfMatchesReferenceDistribution) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 200; ++rep) {
    const double pi = 0.95 * u(rng), mu = 0.05 + 20 * u(rng), theta = 0.05 + 10 * u(rng);
    const double x = std::floor(30 * u(rng) * u(rng));
    const double want = oracle::zinb_pmf(x, pi, mu, theta);
    EXPECT_NEAR(zinb_pmf(x, pi, mu, theta), want, 1e-12 * std::max(1.0, want));
    EXPECT_NEAR(zinb_log_pmf(x, pi, mu, theta), std::log(want), 1e-10);
  }
}

TEST(Zinb, PmfSumsToOne) {
  double total = 0.0;
  for (int x = 0; x <= 10000; ++x) total += zinb_pmf(x, 0.0, 5.0, 2.0);
  EXPECT_NEAR(total, 1.0, 1e-8);
}

TEST(Zinb, NllExamples) {
  const Tensor one = zinb_nll(Matrix::Zero(1, 1), Tensor::scalar(0.5), Tensor::scalar(1.0), Tensor::scalar(1.0));
  EXPECT_NEAR(one.item(), -std::log(0.75), 1e-15);
  EXPECT_NEAR(one.item(), 0.28768, 1e-5);
}

TEST(Zinb, NllIsMeanNegativeLogPmf) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const ZinbInstance z = random_zinb(5, 4, rng);
    double want = 0.0;
    for (Index k = 0; k < z.x.size(); ++k) {
      want -= std::log(oracle::zinb_pmf(z.x.data()[k], z.pi.data()[k], z.mu.data()[k], z.theta.data()[k]));
    }
    want /= static_cast<double>(z.x.size());
    const double got = zinb_nll(z.x, Tensor::constant(z.pi), Tensor::constant(z.mu), Tensor::constant(z.theta)).item();
    EXPECT_NEAR(got, want, 1e-10);
    EXPECT_GE(got, 0.0);
  }
}

TEST(Zinb, GradientsPassFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed + 70);
    const ZinbInstance z = random_zinb(4, 5, rng);
    Tensor pi = Tensor::parameter(z.pi), mu = Tensor::parameter(z.mu), theta = Tensor::parameter(z.theta);
    auto c = [](const Matrix& m) { return Tensor::constant(m); };
    EXPECT_LT(grad_check([&](const Tensor& x) { return zinb_nll(z.x, x, c(z.mu), c(z.theta)); }, pi), 1e-4);
    EXPECT_LT(grad_check([&](const Tensor& x) { return zinb_nll(z.x, c(z.pi), x, c(z.theta)); }, mu), 1e-4);
    EXPECT_LT(grad_check([&](const Tensor& x) { return zinb_nll(z.x, c(z.pi), c(z.mu), x); }, theta), 1e-4);
  }
}

TEST(Zinb, LargeCountsUseDigammaPath) {
  Matrix x(1, 2);
  x << 57, 400;
  Tensor theta = Tensor::parameter(Matrix::Constant(1, 2, 1.3));
  const Tensor pi = Tensor::constant(Matrix::Constant(1, 2, 0.1));
  const Tensor mu = Tensor::constant(Matrix::Constant(1, 2, 60.0));
  EXPECT_LT(grad_check([&](const Tensor& t) { return zinb_nll(x, pi, mu, t); }, theta), 1e-6);
}

TEST(Zinb, FractionalTargetsOnlyWhenAllowed) {
  const Matrix x = Matrix::Constant(1, 1, 1.5);
  const Tensor p = Tensor::scalar(0.2), m = Tensor::scalar(2.0), t = Tensor::scalar(1.0);
  EXPECT_THROW(zinb_nll(x, p, m, t), DataError);
  EXPECT_TRUE(std::isfinite(zinb_nll(x, p, m, t, true).item()));
  Tensor theta = Tensor::parameter(Matrix::Constant(1, 1, 1.0));
  EXPECT_LT(grad_check([&](const Tensor& v) { return zinb_nll(x, p, m, v, true); }, theta), 1e-6);
}

TEST(Zinb, ErrorSurfaces) {
  const Tensor p = Tensor::scalar(0.2), m = Tensor::scalar(2.0), t = Tensor::scalar(1.0);
  EXPECT_THROW(zinb_nll(Matrix::Constant(1, 1, -1.0), p, m, t), DataError);
  EXPECT_THROW(zinb_nll(Matrix::Zero(1, 1), Tensor::scalar(1.0), m, t), DomainError);
  EXPECT_THROW(zinb_nll(Matrix::Zero(1, 1), p, Tensor::scalar(0.0), t), DomainError);
  EXPECT_THROW(zinb_nll(Matrix::Zero(1, 1), p, m, Tensor::scalar(-1.0)), DomainError);
  EXPECT_THROW(zinb_pmf(0.5, 0.2, 1.0, 1.0), DomainError);
  EXPECT_THROW(zinb_nll(Matrix::Zero(2, 1), p, m, t), DimensionError);
}

TEST(Special, DigammaMatchesBoost) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> expo(-6.0, 6.0);
  for (int rep = 0; rep < 2000; ++rep) {
    const double x = std::pow(10.0, expo(rng));
    const double want = boost::math::digamma(x);
    EXPECT_NEAR(digamma(x), want, 1e-10 * std::max(1.0, std::abs(want))) << "x=" << x;
  }
  for (double x : {1e-6, 0.5, 1.0, 2.0, 9.999, 10.0, 1e5, 999999.0}) {
    EXPECT_NEAR(digamma(x), boost::math::digamma(x), 1e-10 * std::max(1.0, std::abs(boost::math::digamma(x))));
  }
}

// ---------------------------------------------------------------------------
// Weighted objective

TEST(TotalLoss, MaskingAndArithmetic) {
  const Tensor zinb = Tensor::parameter(Matrix::Constant(1, 1, 1.25));
  const Tensor cl = Tensor::parameter(Matrix::Constant(1, 1, 3.5));
  const Tensor reg = Tensor::parameter(Matrix::Constant(1, 1, 700.0));
  LossTerms only_zinb = total_loss(zinb, cl, reg, {1.0, 0.0, 0.0});
  EXPECT_EQ(only_zinb.breakdown.total, 1.25);
  backward(only_zinb.total);
  EXPECT_EQ(cl.has_grad() ? cl.grad()(0, 0) : 0.0, 0.0);
  EXPECT_EQ(total_loss(zinb, cl, reg, {0.0, 0.0, 0.0}).breakdown.total, 0.0);
  const LossBreakdown b = total_loss(zinb, cl, reg, {1.0, 0.001, 0.01}).breakdown;
  EXPECT_NEAR(b.total, 1.0 * 1.25 + 0.001 * 3.5 + 0.01 * 700.0, 1e-12);
  EXPECT_EQ(b.zinb, 1.25);
  EXPECT_EQ(b.cl, 3.5);
  EXPECT_EQ(b.reg, 700.0);
  EXPECT_THROW(total_loss(zinb, cl, reg, {1.0, -1.0, 0.0}), ContractError);
}
