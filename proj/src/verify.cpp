// SPDX-License-Identifier: Apache-2.0

#include "jigsaw/verify.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "jigsaw/info.hpp"
#include "jigsaw/interpret.hpp"
#include "jigsaw/jigsaw.hpp"
#include "jigsaw/nets.hpp"
#include "jigsaw/ops.hpp"
#include "jigsaw/ot.hpp"
#include "jigsaw/permutation.hpp"

namespace jigsaw {

using ad::Shape;
using ad::Tensor;

namespace {

Tensor rand_param(Shape shape, Pcg32& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = lo + (hi - lo) * rng.uniform();
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor rand_const(Shape shape, Pcg32& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = lo + (hi - lo) * rng.uniform();
  return Tensor::constant(std::move(shape), std::move(v));
}

// Values at least `gap` away from every kink, where central differences
// straddle a non-differentiable point.
Tensor away_from(Shape shape, Pcg32& rng, std::initializer_list<double> kinks, double gap = 0.02) {
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) {
    bool near;
    do {
      x = 2.0 * rng.uniform() - 1.0;
      near = false;
      for (double k : kinks) near = near || std::abs(x - k) < gap;
    } while (near);
  }
  return Tensor::parameter(std::move(shape), std::move(v));
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

Eigen::MatrixXd to_eigen(const Tensor& t) {
  const auto rows = static_cast<Eigen::Index>(t.dim(0));
  const auto cols = static_cast<Eigen::Index>(t.size() / t.dim(0));
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(t.values().data(), rows, cols);
}

Tensor from_eigen(const Eigen::MatrixXd& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return Tensor::constant({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, std::move(v));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.at(i) - b.at(i)));
  return worst;
}

Permutation non_identity(std::size_t n, Pcg32& rng) {
  for (;;) {
    auto p = sample_permutation(n, rng);
    if (!p.is_identity() || n == 1) return p;
  }
}

}  // namespace

std::vector<GradCase> primitive_grad_cases() {
  using V = std::vector<Tensor>;
  std::vector<GradCase> c;
  auto unary = [&](std::string name, Tensor (*op)(const Tensor&), double lo = -1.0, double hi = 1.0) {
    c.push_back({name, [op](const V& in) { return op(in[0]); },
                 [lo, hi](Pcg32& r) { return V{rand_param({4, 4}, r, lo, hi)}; }});
  };
  c.push_back({"matmul", [](const V& in) { return ad::matmul(in[0], in[1]); },
               [](Pcg32& r) { return V{rand_param({3, 4}, r), rand_param({4, 2}, r)}; }});
  c.push_back({"matmul-batched-shared", [](const V& in) { return ad::matmul(in[0], in[1]); },
               [](Pcg32& r) { return V{rand_param({2, 3, 4}, r), rand_param({4, 3}, r)}; }});
  c.push_back({"matmul-batched", [](const V& in) { return ad::matmul(in[0], in[1]); },
               [](Pcg32& r) { return V{rand_param({2, 3, 4}, r), rand_param({2, 4, 2}, r)}; }});
  c.push_back({"transpose", [](const V& in) { return ad::transpose(in[0]); },
               [](Pcg32& r) { return V{rand_param({2, 3, 4}, r)}; }});
  c.push_back({"add", [](const V& in) { return ad::add(in[0], in[1]); },
               [](Pcg32& r) { return V{rand_param({3, 4}, r), rand_param({3, 4}, r)}; }});
  c.push_back({"add-broadcast", [](const V& in) { return ad::add(in[0], in[1]); },
               [](Pcg32& r) { return V{rand_param({2, 3, 4}, r), rand_param({4}, r)}; }});
  c.push_back({"sub", [](const V& in) { return ad::sub(in[0], in[1]); },
               [](Pcg32& r) { return V{rand_param({3, 4}, r), rand_param({3, 4}, r)}; }});
  c.push_back({"mul", [](const V& in) { return ad::mul(in[0], in[1]); },
               [](Pcg32& r) { return V{rand_param({3, 4}, r), rand_param({3, 4}, r)}; }});
  c.push_back({"mul-broadcast", [](const V& in) { return ad::mul(in[0], in[1]); },
               [](Pcg32& r) { return V{rand_param({3, 4}, r), rand_param({1}, r)}; }});
  c.push_back({"scale", [](const V& in) { return ad::scale(in[0], -1.7); },
               [](Pcg32& r) { return V{rand_param({3, 4}, r)}; }});
  c.push_back({"add_scalar", [](const V& in) { return ad::add_scalar(in[0], 0.3); },
               [](Pcg32& r) { return V{rand_param({3, 4}, r)}; }});
  unary("tanh", ad::tanh);
  c.push_back({"relu", [](const V& in) { return ad::relu(in[0]); },
               [](Pcg32& r) { return V{away_from({4, 4}, r, {0.0})}; }});
  unary("sigmoid", ad::sigmoid, -3.0, 3.0);
  unary("log", ad::log, 0.5, 2.0);
  unary("exp", ad::exp);
  unary("softplus", ad::softplus, -3.0, 3.0);
  c.push_back({"clamp", [](const V& in) { return ad::clamp(in[0], -0.5, 0.5); },
               [](Pcg32& r) { return V{away_from({4, 4}, r, {-0.5, 0.5})}; }});
  unary("softmax", ad::softmax, -2.0, 2.0);
  unary("log_softmax", ad::log_softmax, -2.0, 2.0);
  c.push_back({"layer_norm", [](const V& in) { return ad::layer_norm(in[0], in[1], in[2]); },
               [](Pcg32& r) { return V{rand_param({3, 5}, r), rand_param({5}, r, 0.5, 1.5), rand_param({5}, r)}; }});
  c.push_back({"channel_norm", [](const V& in) { return ad::channel_norm(in[0], in[1], in[2]); },
               [](Pcg32& r) { return V{rand_param({1, 3, 3, 2}, r), rand_param({2}, r, 0.5, 1.5), rand_param({2}, r)}; }});
  c.push_back({"conv2d", [](const V& in) { return ad::conv2d(in[0], in[1]); },
               [](Pcg32& r) { return V{rand_param({1, 5, 5, 2}, r), rand_param({3, 3, 2, 2}, r)}; }});
  c.push_back({"depthwise_conv2d", [](const V& in) { return ad::depthwise_conv2d(in[0], in[1]); },
               [](Pcg32& r) { return V{rand_param({1, 4, 4, 2}, r), rand_param({3, 3, 2}, r)}; }});
  c.push_back({"global_avg_pool", [](const V& in) { return ad::global_avg_pool(in[0]); },
               [](Pcg32& r) { return V{rand_param({2, 3, 3, 2}, r)}; }});
  c.push_back({"global_max_pool", [](const V& in) { return ad::global_max_pool(in[0]); },
               [](Pcg32& r) { return V{rand_param({2, 5, 3}, r)}; }});
  c.push_back({"reshape", [](const V& in) { return ad::reshape(in[0], {2, 6}); },
               [](Pcg32& r) { return V{rand_param({3, 4}, r)}; }});
  c.push_back({"concat", [](const V& in) { return ad::concat({in[0], in[1]}); },
               [](Pcg32& r) { return V{rand_param({2, 3}, r), rand_param({3, 3}, r)}; }});
  c.push_back({"gather_rows", [](const V& in) {
                 const std::size_t idx[] = {2, 0, 2, 1};
                 return ad::gather_rows(in[0], idx);
               },
               [](Pcg32& r) { return V{rand_param({3, 4}, r)}; }});
  unary("sum", ad::sum);
  unary("mean", ad::mean);
  unary("squared_norm", ad::squared_norm);
  return c;
}

namespace {

using Results = std::vector<PropertyResult>;

void add(std::vector<PropertyResult>& out, std::string group, std::string name, bool pass, std::string detail) {
  out.push_back({std::move(group), std::move(name), pass, std::move(detail)});
}

}  // namespace

Results grad_properties(const std::vector<GradCase>& cases, std::size_t trials, double tolerance) {
  Results out;
  for (const auto& gc : cases) {
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      Pcg32 rng = derive_stream(0x67726164, t);
      worst = std::max(worst, ad::grad_check(gc.fn, gc.inputs(rng), 1e-5, t));
    }
    add(out, "grad_check", gc.name, worst < tolerance, "max rel err " + sci(worst));
  }
  return out;
}

namespace {

// Transformer blocks applied straight to the instance sequence, then mean pooled.
struct TinyTransformer {
  ParamSet ps;
  std::vector<TransformerParams> blocks;
  explicit TinyTransformer(std::size_t dim, std::uint64_t seed) {
    Pcg32 rng(seed);
    for (int b = 0; b < 2; ++b) blocks.push_back(make_transformer(ps, "b" + std::to_string(b), dim, rng));
  }
  Tensor pooled(const Tensor& x) const {
    Tensor h = x;
    for (const auto& b : blocks) h = transformer_block(b, h);
    return ad::global_avg_pool(h);
  }
};

}  // namespace

Results invariance_properties(std::size_t pairs) {
  Results out;
  ad::NoGradGuard guard;
  const std::size_t dim = 8;
  ParamSet ps;
  Pcg32 init(0x70726f70);
  const auto abmil = make_abmil(ps, "abmil", dim, 8, init);
  TinyTransformer tf(dim, 0x7466);
  double worst_inv = 0.0;
  std::size_t broken_abmil = 0, broken_max = 0, broken_tf = 0;
  double worst_mean_pe = 0.0;
  for (std::size_t t = 0; t < pairs; ++t) {
    Pcg32 rng = derive_stream(0x70726f70, t);
    const std::size_t n = 4 + rng() % 13;
    const auto x = rand_const({n, dim}, rng, -2.0, 2.0);
    const auto perm = non_identity(n, rng);
    const auto xp = apply(perm, x);
    const auto pe = sinusoidal_pe(n, dim);
    worst_inv = std::max({worst_inv, max_abs_diff(abmil_pool(abmil, x).bag, abmil_pool(abmil, xp).bag),
                          max_abs_diff(baseline_pool(PoolMode::mean, x), baseline_pool(PoolMode::mean, xp)),
                          max_abs_diff(baseline_pool(PoolMode::max, x), baseline_pool(PoolMode::max, xp)),
                          max_abs_diff(tf.pooled(x), tf.pooled(xp))});
    broken_abmil += max_abs_diff(abmil_pool(abmil, x + pe).bag, abmil_pool(abmil, xp + pe).bag) > 1e-3;
    broken_max += max_abs_diff(baseline_pool(PoolMode::max, x + pe), baseline_pool(PoolMode::max, xp + pe)) > 1e-3;
    broken_tf += max_abs_diff(tf.pooled(x + pe), tf.pooled(xp + pe)) > 1e-3;
    worst_mean_pe = std::max(worst_mean_pe, max_abs_diff(baseline_pool(PoolMode::mean, x + pe),
                                                         baseline_pool(PoolMode::mean, xp + pe)));
  }
  const auto need = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(pairs)));
  add(out, "invariance", "pooling invariant without position", worst_inv < 1e-8, "max diff " + sci(worst_inv));
  add(out, "invariance", "sinusoidal PE breaks attention pooling", broken_abmil >= need,
      std::to_string(broken_abmil) + "/" + std::to_string(pairs) + " pairs differ > 1e-3");
  add(out, "invariance", "sinusoidal PE breaks max pooling", broken_max >= need,
      std::to_string(broken_max) + "/" + std::to_string(pairs) + " pairs differ > 1e-3");
  add(out, "invariance", "sinusoidal PE breaks transformer + mean", broken_tf >= need,
      std::to_string(broken_tf) + "/" + std::to_string(pairs) + " pairs differ > 1e-3");
  // An additive encoding shifts the mean by the same vector for every order.
  add(out, "invariance", "mean pooling stays invariant under additive PE", worst_mean_pe < 1e-8,
      "max diff " + sci(worst_mean_pe));
  return out;
}

Results identity_properties(std::size_t cases) {
  ad::NoGradGuard guard;
  Results out;
  bool s1 = true, ortho = true;
  double s3 = 0.0;
  for (std::size_t t = 0; t < cases; ++t) {
    Pcg32 rng = derive_stream(0x6c656d, t);
    const std::size_t n = 1 + rng() % 16, d = 1 + rng() % 8;
    const auto x = rand_const({n, d}, rng, -3.0, 3.0);
    const auto perm = sample_permutation(n, rng);
    const auto xp = apply(perm, x);
    for (auto act : {ad::tanh, ad::relu, ad::sigmoid})
      s1 = s1 && max_abs_diff(act(xp), apply(perm, act(x))) == 0.0;
    const Eigen::MatrixXd X = to_eigen(x), XP = to_eigen(xp);
    s3 = std::max(s3, (XP.transpose() * XP - X.transpose() * X).cwiseAbs().maxCoeff());
    const Eigen::MatrixXd P = to_matrix(perm);
    ortho = ortho && (P.transpose() * P - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() == 0.0;
  }
  add(out, "activation", "activations commute with shuffling", s1, s1 ? "exact" : "mismatch");
  add(out, "gram", "Gram matrix invariant", s3 < 1e-10, "max diff " + sci(s3));
  add(out, "gram", "permutation matrices orthonormal", ortho, ortho ? "exact" : "mismatch");
  return out;
}

Results entropy_properties(std::size_t random_joints, std::size_t independent_joints) {
  Results out;
  double worst_cmi = 0.0, worst_ci = 0.0;
  bool hellman = true;
  for (std::size_t t = 0; t < random_joints; ++t) {
    Pcg32 rng = derive_stream(0x696e666f, t);
    const std::size_t nx = 1 + rng() % 4, np = 1 + rng() % 4, ny = 2 + rng() % 3;
    worst_cmi = std::min(worst_cmi, info::entropy_gap(info::random_joint({nx, np, ny}, rng)).cmi);
    hellman = hellman && info::hellman_bound(info::random_joint({nx + 1, ny}, rng)).holds;
  }
  for (std::size_t t = 0; t < independent_joints; ++t) {
    Pcg32 rng = derive_stream(0x6369, t);
    const std::size_t nx = 1 + rng() % 4, np = 1 + rng() % 4, ny = 2 + rng() % 3;
    const auto j = info::conditionally_independent_joint(nx, np, ny, rng);
    worst_ci = std::max(worst_ci, std::abs(info::entropy_gap(j).cmi));
  }
  add(out, "position_info", "conditional mutual information nonnegative", worst_cmi >= -1e-12, "min " + sci(worst_cmi));
  add(out, "position_info", "zero under conditional independence", worst_ci < 1e-9, "max |cmi| " + sci(worst_ci));
  const auto tight = info::hellman_bound(info::DiscreteJoint({2, 2}, {0.25, 0.25, 0.25, 0.25}));
  add(out, "hellman", "bound holds on random joints", hellman, hellman ? "all hold" : "violated");
  add(out, "hellman", "tight for uniform binary Y", std::abs(tight.bayes_error - tight.bound) < 1e-12,
      "error " + sci(tight.bayes_error) + " bound " + sci(tight.bound));
  return out;
}

Results cam_properties(std::size_t cases) {
  ad::NoGradGuard guard;
  Results out;
  double worst = 0.0;
  for (std::size_t t = 0; t < cases; ++t) {
    Pcg32 rng = derive_stream(0x63616d, t);
    const std::size_t S = 1 + rng() % 25, E = 1 + rng() % 8, C = 1 + rng() % 3;
    HeadParams head{rand_const({E, C}, rng), rand_const({C}, rng)};
    const auto f = rand_const({S, E}, rng);
    const auto logits = classify(head, f);
    for (std::size_t c = 0; c < C; ++c) {
      const auto r = cam(f, head.w, c);
      double mean = 0.0;
      for (double s : r.slot_scores) mean += s;
      mean /= static_cast<double>(S);
      worst = std::max(worst, std::abs(mean + head.b.at(c) - logits.at(c)));
    }
  }
  add(out, "cam", "mean CAM + bias reconstructs the logit", worst < 1e-6, "max err " + sci(worst));
  return out;
}

Results equivalence_properties(std::size_t cases) {
  ad::NoGradGuard guard;
  Results out;
  double exact = 0.0, gemm = 0.0;
  ParamSet ps;
  Pcg32 init(0x657176);
  const auto mlp = make_mlp(ps, "mlp", 6, 4, init);
  const auto a = rand_const({6}, init), b = rand_const({6}, init);
  auto rowwise = [&](const Tensor& x) { return ad::tanh(ad::add(ad::mul(x, a), b)); };
  for (std::size_t t = 0; t < cases; ++t) {
    Pcg32 rng = derive_stream(0x657176, t);
    const std::size_t n = 1 + rng() % 16;
    const auto x = rand_const({n, 6}, rng);
    const auto perm = sample_permutation(n, rng);
    const auto xp = apply(perm, x);
    exact = std::max(exact, equivalence_loss(rowwise(x), rowwise(xp), perm).item());
    gemm = std::max(gemm, equivalence_loss(mlp_embed(mlp, x), mlp_embed(mlp, xp), perm).item());
  }
  add(out, "equivalence", "zero for element-wise maps", exact == 0.0, "max loss " + sci(exact));
  // GEMM kernels may round a row differently depending on where it sits in
  // the batch, so the MLP embedding is exact only up to that rounding.
  add(out, "equivalence", "MLP embedding below 1e-24", gemm < 1e-24, "max loss " + sci(gemm));
  return out;
}

Results ot_properties(std::size_t cases, std::size_t transport_cases) {
  Results out;
  double form = 0.0, scaling = 0.0;
  for (std::size_t t = 0; t < cases; ++t) {
    Pcg32 rng = derive_stream(0x6f74, t);
    const std::size_t n = 1 + rng() % 16, k = 1 + rng() % 6;
    Eigen::MatrixXd f(n, k), g(n, k);
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      f.data()[i] = 2.0 * rng.uniform() - 1.0;
      g.data()[i] = 2.0 * rng.uniform() - 1.0;
    }
    const auto perm = sample_permutation(n, rng);
    form = std::max(form, ot::matrix_form_check(f, g, perm));
    const double eqv = equivalence_loss(from_eigen(f), from_eigen(g), perm).item();
    scaling = std::max(scaling, std::abs(2.0 * static_cast<double>(n) * eqv - ot::inverse_ot_objective(f, g, perm)));
  }
  add(out, "matrix_form", "inverse-OT objective equals shuffled squared error", form < 1e-9, "max diff " + sci(form));
  add(out, "matrix_form", "2n * equivalence loss equals inverse-OT objective", scaling < 1e-9, "max diff " + sci(scaling));

  double worst_gap = 0.0, worst_violation = 0.0, symmetry = 0.0, rematch = 0.0;
  for (std::size_t t = 0; t < transport_cases; ++t) {
    Pcg32 rng = derive_stream(0x736b, t);
    const std::size_t n = 2 + t % 5;
    Eigen::MatrixXd p(n, 2), q(n, 2);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p.data()[i] = static_cast<double>(rng() % 8);
      q.data()[i] = static_cast<double>(rng() % 8);
    }
    const auto exact = ot::emd_bruteforce(p, q);
    const auto approx = ot::sinkhorn_annealed(ot::quadratic_cost(p, q));
    worst_gap = std::max(worst_gap, std::abs(approx.cost - exact.cost) / std::max(exact.cost, 1e-12));
    worst_violation = std::max(worst_violation, approx.violation);
    symmetry = std::max(symmetry, std::abs(exact.cost - ot::emd_bruteforce(q, p).cost));
    rematch = std::max(rematch, ot::emd_bruteforce(p, apply(sample_permutation(n, rng), p)).cost);
  }
  add(out, "sinkhorn", "annealed cost within 1% of brute force", worst_gap < 0.01, "max rel gap " + sci(worst_gap));
  add(out, "sinkhorn", "plan marginals feasible", worst_violation < 1e-8, "max violation " + sci(worst_violation));
  add(out, "emd", "symmetric in its arguments", symmetry < 1e-12, "max diff " + sci(symmetry));
  add(out, "emd", "zero against a shuffled copy", rematch == 0.0, "max cost " + sci(rematch));
  return out;
}

Results run_verify(const VerifyOptions& options) {
  auto cases = primitive_grad_cases();
  cases.insert(cases.end(), options.extra_grad_cases.begin(), options.extra_grad_cases.end());
  const std::size_t n = options.sweep;
  Results out;
  for (auto&& part : {grad_properties(cases, options.grad_trials, options.grad_tolerance), invariance_properties(n),
                      identity_properties(n), ot_properties(n), entropy_properties(n, n), cam_properties(n),
                      equivalence_properties(n)})
    out.insert(out.end(), part.begin(), part.end());
  return out;
}

bool print_results(std::ostream& os, const std::vector<PropertyResult>& results) {
  std::size_t g = 5, n = 8;
  for (const auto& r : results) {
    g = std::max(g, r.group.size());
    n = std::max(n, r.name.size());
  }
  bool all = true;
  std::size_t groups = 0;
  std::string last;
  for (const auto& r : results) {
    if (r.group != last) ++groups, last = r.group;
    os << std::left << std::setw(static_cast<int>(g + 2)) << r.group << std::setw(static_cast<int>(n + 2)) << r.name
       << (r.pass ? "PASS" : "FAIL") << "  " << r.detail << '\n';
    all = all && r.pass;
  }
  std::size_t failed = 0;
  for (const auto& r : results) failed += !r.pass;
  os << groups << " property groups, " << results.size() << " properties, " << failed << " failed\n";
  return all;
}

}  // namespace jigsaw
