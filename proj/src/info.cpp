// SPDX-License-Identifier: Apache-2.0

#include "jigsaw/info.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "jigsaw/tensor.hpp"

namespace jigsaw::info {

DiscreteJoint::DiscreteJoint(std::vector<std::size_t> dims, std::vector<double> probs)
    : dims_(std::move(dims)), probs_(std::move(probs)) {
  if (dims_.empty()) throw Error("joint: no variables");
  std::size_t cells = 1;
  for (auto d : dims_) {
    if (d == 0) throw Error("joint: alphabet sizes must be positive");
    cells *= d;
  }
  if (cells != probs_.size())
    throw Error("joint: alphabet sizes give " + std::to_string(cells) + " cells, table has " +
                std::to_string(probs_.size()));
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw Error("joint: probabilities must be finite and nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > kNormTolerance)
    throw Error("joint: probabilities sum to " + std::to_string(total) + ", not 1");
}

std::vector<double> DiscreteJoint::marginal(const std::vector<std::size_t>& vars) const {
  std::size_t cells = 1;
  for (auto v : vars) {
    if (v >= dims_.size()) throw Error("joint: variable index out of range");
    cells *= dims_[v];
  }
  std::vector<double> out(cells, 0.0);
  std::vector<std::size_t> digit(dims_.size(), 0);
  for (double p : probs_) {
    std::size_t idx = 0;
    for (auto v : vars) idx = idx * dims_[v] + digit[v];
    out[idx] += p;
    for (std::size_t k = dims_.size(); k-- > 0;) {
      if (++digit[k] < dims_[k]) break;
      digit[k] = 0;
    }
  }
  return out;
}

double conditional_entropy(const DiscreteJoint& joint, const std::vector<std::size_t>& target,
                           const std::vector<std::size_t>& given) {
  // Order the combined table as (given..., target...) so each conditioning
  // cell owns a contiguous block.
  std::vector<std::size_t> both = given;
  both.insert(both.end(), target.begin(), target.end());
  const auto pg = joint.marginal(given);
  const auto ptg = joint.marginal(both);
  const std::size_t block = ptg.size() / pg.size();
  double h = 0.0;
  for (std::size_t g = 0; g < pg.size(); ++g) {
    if (pg[g] <= 0.0) continue;
    for (std::size_t t = 0; t < block; ++t) {
      const double p = ptg[g * block + t];
      if (p > 0.0) h -= p * std::log2(p / pg[g]);
    }
  }
  return std::max(h, 0.0);
}

double entropy(const DiscreteJoint& joint, const std::vector<std::size_t>& vars) {
  return conditional_entropy(joint, vars, {});
}

EntropyGap entropy_gap(const DiscreteJoint& joint) {
  if (joint.variables() != 3) throw Error("entropy_gap: expected a joint over (X, P, Y)");
  EntropyGap t;
  t.h_y_given_x = conditional_entropy(joint, {2}, {0});
  t.h_y_given_xp = conditional_entropy(joint, {2}, {0, 1});
  t.cmi = t.h_y_given_x - t.h_y_given_xp;
  return t;
}

Hellman hellman_bound(const DiscreteJoint& joint) {
  if (joint.variables() != 2) throw Error("hellman_bound: expected a joint over (X, Y)");
  const auto nx = joint.dims()[0], ny = joint.dims()[1];
  const auto& p = joint.probs();
  Hellman h;
  for (std::size_t x = 0; x < nx; ++x) {
    double px = 0.0, best = 0.0;
    for (std::size_t y = 0; y < ny; ++y) {
      px += p[x * ny + y];
      best = std::max(best, p[x * ny + y]);
    }
    h.bayes_error += px - best;  // p(x) (1 - max_y p(y|x))
  }
  h.bound = 0.5 * conditional_entropy(joint, {1}, {0});
  h.holds = h.bayes_error <= h.bound + 1e-12;
  return h;
}

namespace {

std::vector<double> dirichlet(std::size_t k, double alpha, Pcg32& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> v(k);
  double total = 0.0;
  for (double& x : v) total += (x = gamma(rng));
  if (total <= 0.0) {
    std::fill(v.begin(), v.end(), 1.0 / static_cast<double>(k));
    return v;
  }
  for (double& x : v) x /= total;
  return v;
}

// Rescales so the table sums to 1 within the joint's tolerance.
std::vector<double> renormalize(std::vector<double> p) {
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& x : p) x /= total;
  return p;
}

}  // namespace

DiscreteJoint random_joint(const std::vector<std::size_t>& dims, Pcg32& rng, double alpha) {
  std::size_t cells = 1;
  for (auto d : dims) cells *= d;
  return DiscreteJoint(dims, renormalize(dirichlet(cells, alpha, rng)));
}

DiscreteJoint conditionally_independent_joint(std::size_t nx, std::size_t np, std::size_t ny, Pcg32& rng) {
  const auto px = dirichlet(nx, 1.0, rng);
  std::vector<double> table(nx * np * ny);
  for (std::size_t x = 0; x < nx; ++x) {
    const auto pp = dirichlet(np, 1.0, rng);
    const auto py = dirichlet(ny, 1.0, rng);
    for (std::size_t p = 0; p < np; ++p)
      for (std::size_t y = 0; y < ny; ++y) table[(x * np + p) * ny + y] = px[x] * pp[p] * py[y];
  }
  return DiscreteJoint({nx, np, ny}, renormalize(std::move(table)));
}

DiscreteJoint parse_joint(std::istream& in) {
  std::vector<std::size_t> dims;
  std::vector<double> probs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string tok;
    bool any = false;
    while (fields >> tok) {
      any = true;
      try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        probs.push_back(v);
      } catch (const std::exception&) {
        throw Error("joint table line " + std::to_string(lineno) + ": cannot parse '" + tok + "'");
      }
    }
    if (any && dims.empty()) {
      for (double v : probs) {
        if (v < 1.0 || v != std::floor(v))
          throw Error("joint table line " + std::to_string(lineno) + ": alphabet sizes must be positive integers");
        dims.push_back(static_cast<std::size_t>(v));
      }
      probs.clear();
    }
  }
  if (dims.empty()) throw Error("joint table: missing alphabet-size header");
  return DiscreteJoint(std::move(dims), std::move(probs));
}

}  // namespace jigsaw::info
