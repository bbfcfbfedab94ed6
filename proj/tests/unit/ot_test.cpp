// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "gen.hpp"
#include "jigsaw/jigsaw.hpp"
#include "jigsaw/ot.hpp"

using namespace jigsaw;

namespace {
Eigen::MatrixXd col(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

Eigen::MatrixXd grid_points(std::size_t n, Pcg32& rng) {
  Eigen::MatrixXd p(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<double>(rng() % 8);
  return p;
}

}  // namespace

TEST(Emd, IdenticalSetsCostZeroIdentityPlan) {
  Pcg32 rng(1);
  const auto p = gen::random_matrix(5, 2, rng);
  const auto r = ot::emd_bruteforce(p, p);
  EXPECT_EQ(r.cost, 0.0);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(r.assignment[i], i);
}

TEST(Emd, SwappedPairMatchesPerfectly) {
  EXPECT_EQ(ot::emd_bruteforce(col({0, 1}), col({1, 0})).cost, 0.0);
}

TEST(Emd, MonotoneMatching) {
  EXPECT_NEAR(ot::emd_bruteforce(col({0, 1, 2}), col({0.5, 1.5, 2.5})).cost, 0.25, 1e-15);
}

TEST(Emd, RejectsLargeN) {
  Pcg32 rng(2);
  const auto p = gen::random_matrix(9, 2, rng);
  try {
    ot::emd_bruteforce(p, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("sinkhorn"), std::string::npos);
  }
}

TEST(Emd, SymmetricAndZeroAgainstShuffle) {
  Pcg32 rng(3);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 1 + rng() % 6;
    const auto p = grid_points(n, rng), q = grid_points(n, rng);
    EXPECT_EQ(ot::emd_bruteforce(p, q).cost, ot::emd_bruteforce(q, p).cost);
    EXPECT_EQ(ot::emd_bruteforce(p, apply(sample_permutation(n, rng), p)).cost, 0.0);
  }
}

TEST(Emd, PlanHasUniformMarginals) {
  Pcg32 rng(4);
  const auto r = ot::emd_bruteforce(grid_points(5, rng), grid_points(5, rng));
  EXPECT_TRUE(r.plan.rowwise().sum().isApprox(Eigen::VectorXd::Constant(5, 0.2)));
  EXPECT_TRUE(r.plan.colwise().sum().transpose().isApprox(Eigen::VectorXd::Constant(5, 0.2)));
}

TEST(Sinkhorn, ZeroCostGivesUniformPlan) {
  const auto r = ot::sinkhorn(Eigen::MatrixXd::Zero(4, 4), 0.1);
  EXPECT_TRUE(r.converged);
  EXPECT_LT((r.plan.array() - 1.0 / 16.0).abs().maxCoeff(), 1e-12);
}

TEST(Sinkhorn, FeasibleNonnegativePlans) {
  Pcg32 rng(5);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 2 + rng() % 5;
    const auto r = ot::sinkhorn(ot::quadratic_cost(grid_points(n, rng), grid_points(n, rng)), 10.0);
    EXPECT_TRUE(r.converged);
    EXPECT_GE(r.plan.minCoeff(), 0.0);
    const double target = 1.0 / static_cast<double>(n);
    EXPECT_LT((r.plan.rowwise().sum().array() - target).abs().maxCoeff(), 1e-8);
    EXPECT_LT((r.plan.colwise().sum().array() - target).abs().maxCoeff(), 1e-8);
  }
}

TEST(Sinkhorn, ReportsNonConvergence) {
  Pcg32 rng(6);
  const auto r = ot::sinkhorn(ot::quadratic_cost(grid_points(6, rng), grid_points(6, rng)), 1e-3, 1);
  EXPECT_FALSE(r.converged);
  EXPECT_GT(r.violation, 0.0);
  EXPECT_THROW(ot::sinkhorn(Eigen::MatrixXd::Zero(2, 2), 0.0), Error);
}

TEST(Sinkhorn, AnnealedWithinOnePercentOfBruteForce) {
  Pcg32 rng(7);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + static_cast<std::size_t>(t) % 5;
    const auto p = grid_points(n, rng), q = grid_points(n, rng);
    const auto exact = ot::emd_bruteforce(p, q);
    const auto approx = ot::sinkhorn_annealed(ot::quadratic_cost(p, q));
    EXPECT_LE(std::abs(approx.cost - exact.cost), 0.01 * exact.cost + 1e-12);
  }
}

TEST(InverseOt, Examples) {
  const auto f = col({0, 1}), fp = col({1, 0});
  EXPECT_EQ(ot::inverse_ot_objective(f, fp, Permutation({1, 0})), 0.0);
  EXPECT_EQ(ot::inverse_ot_objective(f, fp, Permutation::identity(2)), 2.0);
  EXPECT_EQ(ot::inverse_ot_objective(f, f, Permutation::identity(2)), 0.0);
  Pcg32 rng(8);
  const auto g = gen::random_matrix(6, 3, rng);
  const auto p = sample_permutation(6, rng);
  EXPECT_LT(ot::inverse_ot_objective(g, apply(p, g), p), 1e-24);
  EXPECT_THROW(ot::inverse_ot_objective(g, gen::random_matrix(6, 2, rng), p), Error);
}

TEST(InverseOt, MatrixFormAndScaling) {
  Pcg32 rng(9);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng() % 16, k = 1 + rng() % 5;
    const auto f = gen::random_matrix(n, k, rng), fp = gen::random_matrix(n, k, rng);
    const auto p = sample_permutation(n, rng);
    EXPECT_LT(ot::matrix_form_check(f, fp, p), 1e-9);
    // Independent evaluation of the double sum with the explicit matrix.
    const Eigen::MatrixXd pt = to_matrix(p).transpose();
    double direct = 0.0;
    for (Eigen::Index i = 0; i < f.rows(); ++i)
      for (Eigen::Index j = 0; j < f.rows(); ++j) direct += pt(i, j) * (f.row(i) - fp.row(j)).squaredNorm();
    EXPECT_NEAR(ot::inverse_ot_objective(f, fp, p), direct, 1e-12);
    ad::Tensor tf = ad::Tensor::constant({n, k}, std::vector<double>(n * k)), tfp = tf;
    {
      std::vector<double> a(n * k), b(n * k);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          a[i * k + j] = f(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          b[i * k + j] = fp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
      tf = ad::Tensor::constant({n, k}, a);
      tfp = ad::Tensor::constant({n, k}, b);
    }
    const double eqv = equivalence_loss(tf, tfp, p).item();
    EXPECT_NEAR(2.0 * static_cast<double>(n) * eqv, ot::inverse_ot_objective(f, fp, p), 1e-9);
  }
}

TEST(InverseOt, IdentityReducesToFrobenius) {
  Pcg32 rng(10);
  const auto f = gen::random_matrix(4, 3, rng), fp = gen::random_matrix(4, 3, rng);
  EXPECT_NEAR(ot::inverse_ot_objective(f, fp, Permutation::identity(4)), (f - fp).squaredNorm(), 1e-12);
}
