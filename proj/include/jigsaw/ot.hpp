// SPDX-License-Identifier: Apache-2.0
//
// Optimal-transport checks: exact EMD by enumeration, log-domain Sinkhorn and
// the inverse-transport objective under an observed permutation plan.

#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

#include "jigsaw/permutation.hpp"

namespace jigsaw::ot {

/// C_ij = ||p_i - q_j||^2 for point sets given as rows.
Eigen::MatrixXd quadratic_cost(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q);

inline constexpr std::size_t kMaxBruteForce = 8;

struct EmdResult {
  double cost = 0.0;                    // (1/n) sum_i C_{i, assignment[i]}
  std::vector<std::size_t> assignment;  // optimal matching
  Eigen::MatrixXd plan;                 // entries 1/n on the matching
};

/// Exhaustive search over all n! matchings with uniform marginals (n <= 8).
EmdResult emd_bruteforce(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q);

struct SinkhornResult {
  Eigen::MatrixXd plan;
  bool converged = false;
  double violation = 0.0;  // max marginal error on exit
  std::size_t iterations = 0;
  double cost = 0.0;       // <plan, C>
};

/// Entropic plan with uniform 1/n marginals, iterated in the log domain
/// until the marginal violation drops below tol or max_iters is reached.
SinkhornResult sinkhorn(const Eigen::MatrixXd& cost, double epsilon, std::size_t max_iters = 10000,
                        double tol = 1e-9);

struct AnnealSchedule {
  double start = 1.0;
  double factor = 0.5;
  std::size_t halvings = 10;  // epsilon runs start, start*factor, ... (halvings + 1 stages)
  std::size_t max_iters = 20000;
  double tol = 1e-9;
};

/// Runs sinkhorn over a geometric epsilon schedule, warm-starting each stage
/// from the previous potentials.
SinkhornResult sinkhorn_annealed(const Eigen::MatrixXd& cost, const AnnealSchedule& schedule = {});

/// sum_ij (P_sigma^T)_ij ||F_i - F'_j||^2.
double inverse_ot_objective(const Eigen::MatrixXd& f, const Eigen::MatrixXd& f_prime, const Permutation& perm);
/// |inverse_ot_objective - ||apply(perm, F) - F'||_F^2|.
double matrix_form_check(const Eigen::MatrixXd& f, const Eigen::MatrixXd& f_prime, const Permutation& perm);

}  // namespace jigsaw::ot
