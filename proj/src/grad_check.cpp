// SPDX-License-Identifier: Apache-2.0

#include "jigsaw/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "jigsaw/ops.hpp"
#include "jigsaw/rng.hpp"

namespace jigsaw::ad {

namespace {

Tensor project(const Tensor& out, std::uint64_t seed) {
  if (out.size() == 1) return reshape(out, {1});
  Pcg32 rng = derive_stream(seed, out.size());
  std::vector<double> r(out.size());
  for (double& v : r) v = 2.0 * rng.uniform() - 1.0;
  return sum(mul(out, Tensor::constant(out.shape(), std::move(r))));
}

}  // namespace

double grad_check(const TensorFn& fn, const std::vector<Tensor>& inputs, double eps,
                  std::uint64_t projection_seed) {
  for (auto t : inputs)
    if (t.requires_grad()) t.zero_grad();
  backward(project(fn(inputs), projection_seed));

  double worst = 0.0;
  for (auto t : inputs) {
    if (!t.requires_grad()) continue;
    const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                      : std::vector<double>(t.size(), 0.0);
    auto values = t.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      double plus, minus;
      {
        NoGradGuard guard;
        values[i] = saved + eps;
        plus = project(fn(inputs), projection_seed).item();
        values[i] = saved - eps;
        minus = project(fn(inputs), projection_seed).item();
      }
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
    t.zero_grad();
  }
  return worst;
}

}  // namespace jigsaw::ad
