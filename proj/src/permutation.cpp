// SPDX-License-Identifier: Apache-2.0

#include "jigsaw/permutation.hpp"

#include <numeric>
#include <random>
#include <string>

#include "jigsaw/ops.hpp"

namespace jigsaw {

Permutation::Permutation(std::vector<std::size_t> sigma) : sigma_(std::move(sigma)) {
  if (sigma_.empty()) throw Error("permutation: empty index list");
  std::vector<bool> seen(sigma_.size(), false);
  for (std::size_t i = 0; i < sigma_.size(); ++i) {
    const auto s = sigma_[i];
    if (s >= sigma_.size())
      throw Error("permutation: entry " + std::to_string(i) + " = " + std::to_string(s) +
                  " is out of range for n = " + std::to_string(sigma_.size()));
    if (seen[s]) throw Error("permutation: index " + std::to_string(s) + " repeats");
    seen[s] = true;
  }
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::size_t> sigma(n);
  std::iota(sigma.begin(), sigma.end(), std::size_t{0});
  return Permutation(std::move(sigma));
}

bool Permutation::is_identity() const {
  for (std::size_t i = 0; i < sigma_.size(); ++i)
    if (sigma_[i] != i) return false;
  return true;
}

Permutation sample_permutation(std::size_t n, Pcg32& rng) {
  if (n == 0) throw Error("sample_permutation: n must be at least 1");
  std::vector<std::size_t> sigma(n);
  std::iota(sigma.begin(), sigma.end(), std::size_t{0});
  for (std::size_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(sigma[i], sigma[pick(rng)]);
  }
  return Permutation(std::move(sigma));
}

Permutation inverse(const Permutation& p) {
  std::vector<std::size_t> inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
  return Permutation(std::move(inv));
}

Permutation compose(const Permutation& first, const Permutation& second) {
  if (first.size() != second.size()) throw Error("compose: permutation sizes differ");
  // (P_a P_b)_{ij} = 1 iff j = b[a[i]].
  std::vector<std::size_t> out(first.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = second[first[i]];
  return Permutation(std::move(out));
}

Eigen::MatrixXd to_matrix(const Permutation& p) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m(i, p[i]) = 1.0;
  return m;
}

ad::Tensor apply(const Permutation& p, const ad::Tensor& x) {
  if (x.dim(0) != p.size())
    throw ShapeError("apply: permutation of size " + std::to_string(p.size()) +
                     " cannot shuffle a leading axis of " + std::to_string(x.dim(0)));
  return ad::gather_rows(x, p.indices());
}

Eigen::MatrixXd apply(const Permutation& p, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.rows()) != p.size())
    throw ShapeError("apply: permutation of size " + std::to_string(p.size()) +
                     " cannot shuffle " + std::to_string(x.rows()) + " rows");
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (std::size_t i = 0; i < p.size(); ++i) out.row(i) = x.row(p[i]);
  return out;
}

}  // namespace jigsaw
