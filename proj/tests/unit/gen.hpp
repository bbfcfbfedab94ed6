// SPDX-License-Identifier: Apache-2.0
//
// Small generators shared by the property tests.

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "jigsaw/rng.hpp"
#include "jigsaw/tensor.hpp"

namespace gen {

inline std::vector<double> uniform(std::size_t n, jigsaw::Pcg32& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

inline jigsaw::ad::Tensor constant(jigsaw::ad::Shape s, jigsaw::Pcg32& rng, double lo = -1.0, double hi = 1.0) {
  const auto n = jigsaw::ad::numel(s);
  return jigsaw::ad::Tensor::constant(std::move(s), uniform(n, rng, lo, hi));
}

inline jigsaw::ad::Tensor parameter(jigsaw::ad::Shape s, jigsaw::Pcg32& rng, double lo = -1.0, double hi = 1.0) {
  const auto n = jigsaw::ad::numel(s);
  return jigsaw::ad::Tensor::parameter(std::move(s), uniform(n, rng, lo, hi));
}

inline Eigen::MatrixXd matrix(const jigsaw::ad::Tensor& t) {
  const auto rows = static_cast<Eigen::Index>(t.dim(0));
  const auto cols = static_cast<Eigen::Index>(t.size() / t.dim(0));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = t.at(static_cast<std::size_t>(i * cols + j));
  return m;
}

inline Eigen::MatrixXd random_matrix(std::size_t rows, std::size_t cols, jigsaw::Pcg32& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 2.0 * rng.uniform() - 1.0;
  return m;
}

inline double max_abs_diff(const jigsaw::ad::Tensor& a, const jigsaw::ad::Tensor& b) {
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a.at(i) - b.at(i)));
  return w;
}

}  // namespace gen
