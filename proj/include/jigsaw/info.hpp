// SPDX-License-Identifier: Apache-2.0
//
// Entropies of finite joint distributions, in bits.

#pragma once

#include <cstddef>
#include <istream>
#include <vector>

#include "jigsaw/error.hpp"
#include "jigsaw/rng.hpp"

namespace jigsaw::info {

inline constexpr double kNormTolerance = 1e-12;

/// Joint distribution over k finite variables; probabilities are stored
/// row-major with the last variable varying fastest.
class DiscreteJoint {
 public:
  /// Rejects negative entries and tables that do not sum to 1 within 1e-12.
  DiscreteJoint(std::vector<std::size_t> dims, std::vector<double> probs);

  const std::vector<std::size_t>& dims() const { return dims_; }
  const std::vector<double>& probs() const { return probs_; }
  std::size_t variables() const { return dims_.size(); }
  /// Marginal table over `vars` (in the given order).
  std::vector<double> marginal(const std::vector<std::size_t>& vars) const;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> probs_;
};

/// H(target | given) = -sum p(t, g) log2 p(t | g); zero-mass cells contribute 0.
double conditional_entropy(const DiscreteJoint& joint, const std::vector<std::size_t>& target,
                           const std::vector<std::size_t>& given);
/// H(vars).
double entropy(const DiscreteJoint& joint, const std::vector<std::size_t>& vars);

struct EntropyGap {
  double h_y_given_x = 0.0;
  double h_y_given_xp = 0.0;
  double cmi = 0.0;  // h_y_given_x - h_y_given_xp
};
/// Variables ordered (X, P, Y).
EntropyGap entropy_gap(const DiscreteJoint& joint);

struct Hellman {
  double bayes_error = 0.0;
  double bound = 0.0;  // H(Y|X) / 2
  bool holds = false;
};
/// Variables ordered (X, Y).
Hellman hellman_bound(const DiscreteJoint& joint);

/// Dirichlet(alpha) draw over the full table.
DiscreteJoint random_joint(const std::vector<std::size_t>& dims, Pcg32& rng, double alpha = 1.0);
/// (X, P, Y) joint with P and Y conditionally independent given X.
DiscreteJoint conditionally_independent_joint(std::size_t nx, std::size_t np, std::size_t ny, Pcg32& rng);

/// Text form: first non-comment line lists alphabet sizes; the remaining
/// numbers are the probabilities in row-major order. '#' starts a comment.
DiscreteJoint parse_joint(std::istream& in);

}  // namespace jigsaw::info
