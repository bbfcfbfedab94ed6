// SPDX-License-Identifier: Apache-2.0
//
// Self-contained property suites behind the `verify` and `ot-check` commands.

#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "jigsaw/grad_check.hpp"
#include "jigsaw/rng.hpp"

namespace jigsaw {

struct PropertyResult {
  std::string group;
  std::string name;
  bool pass = false;
  std::string detail;
};

struct GradCase {
  std::string name;
  ad::TensorFn fn;
  std::function<std::vector<ad::Tensor>(Pcg32&)> inputs;
};

/// One case per differentiable primitive, on inputs of at most 64 values.
std::vector<GradCase> primitive_grad_cases();

struct VerifyOptions {
  std::size_t grad_trials = 100;
  std::size_t sweep = 200;  // random cases per sweep-style property
  double grad_tolerance = 1e-4;
  /// Checked alongside the primitive cases (used to inject faulty adjoints).
  std::vector<GradCase> extra_grad_cases;
};

std::vector<PropertyResult> run_verify(const VerifyOptions& options = {});

// The groups run_verify is made of, each with its own case count.
std::vector<PropertyResult> grad_properties(const std::vector<GradCase>& cases, std::size_t trials,
                                            double tolerance);
std::vector<PropertyResult> invariance_properties(std::size_t pairs);
std::vector<PropertyResult> identity_properties(std::size_t cases);
/// Matrix-form identities on `cases` inputs, Sinkhorn against brute force on
/// `transport_cases` point sets with n <= 6.
std::vector<PropertyResult> ot_properties(std::size_t cases, std::size_t transport_cases = 20);
std::vector<PropertyResult> entropy_properties(std::size_t random_joints, std::size_t independent_joints);
std::vector<PropertyResult> cam_properties(std::size_t cases);
std::vector<PropertyResult> equivalence_properties(std::size_t cases);

/// Prints an aligned table; returns true when every property passed.
bool print_results(std::ostream& out, const std::vector<PropertyResult>& results);

}  // namespace jigsaw
