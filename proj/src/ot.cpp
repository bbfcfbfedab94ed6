// SPDX-License-Identifier: Apache-2.0

#include "jigsaw/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace jigsaw::ot {

namespace {

void require_same_shape(const char* op, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": operands differ in shape (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

struct Potentials {
  Eigen::VectorXd f, g;
};

SinkhornResult run(const Eigen::MatrixXd& C, double eps, std::size_t max_iters, double tol, Potentials& pot) {
  if (!(eps > 0.0)) throw Error("sinkhorn: epsilon must be positive");
  if (C.rows() != C.cols() || C.rows() == 0) throw ShapeError("sinkhorn: cost matrix must be square and nonempty");
  if ((C.array() < 0.0).any()) throw Error("sinkhorn: cost entries must be nonnegative");
  const auto n = C.rows();
  const double log_mass = -std::log(static_cast<double>(n));
  Eigen::VectorXd buf(n);
  SinkhornResult out;
  auto plan_of = [&] {
    Eigen::MatrixXd T(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) T(i, j) = std::exp((pot.f(i) + pot.g(j) - C(i, j)) / eps);
    return T;
  };
  for (std::size_t it = 1; it <= max_iters; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) buf(j) = (pot.g(j) - C(i, j)) / eps;
      pot.f(i) = eps * (log_mass - log_sum_exp(buf));
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) buf(i) = (pot.f(i) - C(i, j)) / eps;
      pot.g(j) = eps * (log_mass - log_sum_exp(buf));
    }
    out.iterations = it;
    // Columns are exact after the g update; rows carry the violation.
    if (it % 10 == 0 || it == max_iters) {
      const Eigen::MatrixXd T = plan_of();
      const double target = 1.0 / static_cast<double>(n);
      out.violation = std::max((T.rowwise().sum().array() - target).abs().maxCoeff(),
                               (T.colwise().sum().array() - target).abs().maxCoeff());
      if (out.violation < tol) {
        out.converged = true;
        break;
      }
    }
  }
  out.plan = plan_of();
  out.cost = (out.plan.array() * C.array()).sum();
  return out;
}

}  // namespace

Eigen::MatrixXd quadratic_cost(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
  if (p.cols() != q.cols()) throw ShapeError("quadratic_cost: point dimensions differ");
  Eigen::MatrixXd C(p.rows(), q.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < q.rows(); ++j) C(i, j) = (p.row(i) - q.row(j)).squaredNorm();
  return C;
}

EmdResult emd_bruteforce(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
  require_same_shape("emd_bruteforce", p, q);
  const auto n = static_cast<std::size_t>(p.rows());
  if (n == 0) throw Error("emd_bruteforce: empty point sets");
  if (n > kMaxBruteForce)
    throw Error("emd_bruteforce: n = " + std::to_string(n) + " exceeds " + std::to_string(kMaxBruteForce) +
                " (n! matchings); use sinkhorn_annealed for larger sets");
  const Eigen::MatrixXd C = quadratic_cost(p, q);
  std::vector<std::size_t> sigma(n);
  std::iota(sigma.begin(), sigma.end(), std::size_t{0});
  EmdResult best;
  best.cost = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += C(i, sigma[i]);
    if (total < best.cost) {
      best.cost = total;
      best.assignment = sigma;
    }
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  best.cost /= static_cast<double>(n);
  best.plan = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < n; ++i) best.plan(i, best.assignment[i]) = 1.0 / static_cast<double>(n);
  return best;
}

SinkhornResult sinkhorn(const Eigen::MatrixXd& cost, double epsilon, std::size_t max_iters, double tol) {
  Potentials pot{Eigen::VectorXd::Zero(cost.rows()), Eigen::VectorXd::Zero(cost.cols())};
  return run(cost, epsilon, max_iters, tol, pot);
}

SinkhornResult sinkhorn_annealed(const Eigen::MatrixXd& cost, const AnnealSchedule& s) {
  if (!(s.start > 0.0 && s.factor > 0.0 && s.factor < 1.0)) throw Error("sinkhorn_annealed: invalid schedule");
  Potentials pot{Eigen::VectorXd::Zero(cost.rows()), Eigen::VectorXd::Zero(cost.cols())};
  SinkhornResult out;
  double eps = s.start;
  std::size_t total = 0;
  for (std::size_t stage = 0; stage <= s.halvings; ++stage, eps *= s.factor) {
    out = run(cost, eps, s.max_iters, s.tol, pot);
    total += out.iterations;
  }
  out.iterations = total;
  return out;
}

double inverse_ot_objective(const Eigen::MatrixXd& f, const Eigen::MatrixXd& f_prime, const Permutation& perm) {
  require_same_shape("inverse_ot_objective", f, f_prime);
  if (static_cast<std::size_t>(f.rows()) != perm.size())
    throw ShapeError("inverse_ot_objective: permutation size differs from row count");
  const Eigen::MatrixXd plan = to_matrix(perm).transpose();
  double total = 0.0;
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    for (Eigen::Index j = 0; j < f.rows(); ++j)
      total += plan(i, j) * (f.row(i) - f_prime.row(j)).squaredNorm();
  return total;
}

double matrix_form_check(const Eigen::MatrixXd& f, const Eigen::MatrixXd& f_prime, const Permutation& perm) {
  const double direct = inverse_ot_objective(f, f_prime, perm);
  const double matrix_form = (apply(perm, f) - f_prime).squaredNorm();
  return std::abs(direct - matrix_form);
}

}  // namespace jigsaw::ot
