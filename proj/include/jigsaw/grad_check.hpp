// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "jigsaw/tensor.hpp"

namespace jigsaw::ad {

using TensorFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients against central differences.
///
/// Non-scalar outputs are reduced to sum(out * R) with a fixed random R drawn
/// from `projection_seed`. Only inputs that require a gradient are probed.
/// Returns max |analytic - numeric| / max(1, |numeric|) over all probed
/// elements (0 when nothing is probed).
double grad_check(const TensorFn& fn, const std::vector<Tensor>& inputs, double eps = 1e-5,
                  std::uint64_t projection_seed = 0x5eed);

}  // namespace jigsaw::ad
