// SPDX-License-Identifier: Apache-2.0
//
// Permutations of {0..n-1}. apply() moves row sigma[i] of its input to row i,
// so apply(p, X) == to_matrix(p) * X.

#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

#include "jigsaw/rng.hpp"
#include "jigsaw/tensor.hpp"

namespace jigsaw {

class Permutation {
 public:
  /// Validates that sigma is a bijection on {0..n-1}; throws Error otherwise.
  explicit Permutation(std::vector<std::size_t> sigma);
  static Permutation identity(std::size_t n);

  std::size_t size() const { return sigma_.size(); }
  std::size_t operator[](std::size_t i) const { return sigma_[i]; }
  const std::vector<std::size_t>& indices() const { return sigma_; }
  bool is_identity() const;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<std::size_t> sigma_;
};

/// Fisher-Yates; n == 0 is rejected.
Permutation sample_permutation(std::size_t n, Pcg32& rng);
Permutation inverse(const Permutation& p);
/// Permutation whose matrix is to_matrix(first) * to_matrix(second).
Permutation compose(const Permutation& first, const Permutation& second);

Eigen::MatrixXd to_matrix(const Permutation& p);

/// Shuffles the leading axis. The tensor overload is differentiable.
ad::Tensor apply(const Permutation& p, const ad::Tensor& x);
Eigen::MatrixXd apply(const Permutation& p, const Eigen::MatrixXd& x);

}  // namespace jigsaw
