// SPDX-License-Identifier: Apache-2.0

#include "jigsaw/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace jigsaw::ad {

using detail::make_result;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

[[noreturn]] void shape_fail(std::string_view op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

// c (+)= op(a) * op(b) for row-major blocks.
void gemm(const double* a, std::size_t a_rows, std::size_t a_cols, bool trans_a,
          const double* b, std::size_t b_rows, std::size_t b_cols, bool trans_b,
          double* c, bool accumulate) {
  ConstMap A(a, a_rows, a_cols);
  ConstMap B(b, b_rows, b_cols);
  const auto out_rows = trans_a ? a_cols : a_rows;
  const auto out_cols = trans_b ? b_rows : b_cols;
  MutMap C(c, out_rows, out_cols);
  if (!accumulate) C.setZero();
  if (!trans_a && !trans_b) C.noalias() += A * B;
  else if (trans_a && !trans_b) C.noalias() += A.transpose() * B;
  else if (!trans_a && trans_b) C.noalias() += A * B.transpose();
  else C.noalias() += A.transpose() * B.transpose();
}

bool needs(const std::shared_ptr<Node>& n) { return n->requires_grad; }

// How the right operand of a binary op maps onto the left one.
struct Broadcast {
  std::size_t inner = 0;  // numel of b; b index = i % inner
};

Broadcast broadcast_rule(std::string_view op, const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) return {b.size()};
  if (b.size() == 1) return {1};
  if (sb.size() <= sa.size() &&
      std::equal(sb.rbegin(), sb.rend(), sa.rbegin()))
    return {b.size()};
  shape_fail(op, "cannot broadcast " + to_string(sb) + " onto " + to_string(sa));
}

template <class F>
Tensor unary(std::string_view op, const Tensor& a, F&& f,
             std::function<void(Node&)> adjoint) {
  std::vector<double> out(a.size());
  const auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result(op, a.shape(), std::move(out), {a}, std::move(adjoint));
}

// Adjoint of an elementwise map whose derivative is expressed through the
// input x and output y.
template <class D>
std::function<void(Node&)> pointwise_adjoint(D&& deriv) {
  return [deriv](Node& self) {
    auto& p = self.parents[0];
    if (!needs(p)) return;
    auto& g = p->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += self.grad[i] * deriv(p->value[i], self.value[i]);
  };
}

struct ImageDims {
  std::size_t batch, height, width, channels;
};

ImageDims image_dims(std::string_view op, const Tensor& x) {
  if (x.rank() != 4) shape_fail(op, "expected [B,H,W,C], got " + to_string(x.shape()));
  return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
}

// Rows of a pooled tensor: [groups, per_group, channels].
struct PoolDims {
  std::size_t groups, per_group, channels;
};

PoolDims pool_dims(std::string_view op, const Tensor& x) {
  if (x.rank() < 2) shape_fail(op, "expected rank >= 2, got " + to_string(x.shape()));
  const auto channels = x.shape().back();
  if (x.rank() == 2) return {1, x.dim(0), channels};
  const auto groups = x.dim(0);
  return {groups, x.size() / (groups * channels), channels};
}

}  // namespace

// ---------------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  constexpr std::string_view op = "matmul";
  const auto ra = a.rank(), rb = b.rank();
  if (!((ra == 2 || ra == 3) && (rb == 2 || (rb == 3 && ra == 3))))
    shape_fail(op, "unsupported ranks " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const std::size_t k = a.shape().back();
  const std::size_t kb = b.shape()[rb - 2];
  if (k != kb)
    shape_fail(op, "inner extents differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const std::size_t m = b.shape().back();

  if (rb == 2) {
    // A single GEMM over all rows, batched or not.
    const std::size_t rows = a.size() / k;
    Shape out_shape = a.shape();
    out_shape.back() = m;
    std::vector<double> out(rows * m);
    gemm(a.values().data(), rows, k, false, b.values().data(), k, m, false, out.data(), false);
    return make_result(op, std::move(out_shape), std::move(out), {a, b},
                       [rows, k, m](Node& self) {
                         auto& pa = self.parents[0];
                         auto& pb = self.parents[1];
                         if (needs(pa))
                           gemm(self.grad.data(), rows, m, false, pb->value.data(), k, m, true,
                                pa->ensure_grad().data(), true);
                         if (needs(pb))
                           gemm(pa->value.data(), rows, k, true, self.grad.data(), rows, m, false,
                                pb->ensure_grad().data(), true);
                       });
  }

  const std::size_t batch = a.dim(0);
  if (b.dim(0) != batch)
    shape_fail(op, "batch extents differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const std::size_t n = a.dim(1);
  std::vector<double> out(batch * n * m);
  for (std::size_t i = 0; i < batch; ++i)
    gemm(a.values().data() + i * n * k, n, k, false, b.values().data() + i * k * m, k, m, false,
         out.data() + i * n * m, false);
  return make_result(op, {batch, n, m}, std::move(out), {a, b},
                     [batch, n, k, m](Node& self) {
                       auto& pa = self.parents[0];
                       auto& pb = self.parents[1];
                       for (std::size_t i = 0; i < batch; ++i) {
                         const double* g = self.grad.data() + i * n * m;
                         if (needs(pa))
                           gemm(g, n, m, false, pb->value.data() + i * k * m, k, m, true,
                                pa->ensure_grad().data() + i * n * k, true);
                         if (needs(pb))
                           gemm(pa->value.data() + i * n * k, n, k, true, g, n, m, false,
                                pb->ensure_grad().data() + i * k * m, true);
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  constexpr std::string_view op = "transpose";
  if (a.rank() != 2 && a.rank() != 3) shape_fail(op, "expected rank 2 or 3, got " + to_string(a.shape()));
  const std::size_t batch = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t r = a.shape()[a.rank() - 2], c = a.shape().back();
  Shape out_shape = a.shape();
  std::swap(out_shape[a.rank() - 2], out_shape[a.rank() - 1]);
  std::vector<double> out(a.size());
  const auto in = a.values();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = in[b * r * c + i * c + j];
  return make_result(op, std::move(out_shape), std::move(out), {a}, [batch, r, c](Node& self) {
    auto& p = self.parents[0];
    if (!needs(p)) return;
    auto& g = p->ensure_grad();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[b * r * c + i * c + j] += self.grad[b * r * c + j * r + i];
  });
}

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  const auto rule = broadcast_rule("add", a, b);
  std::vector<double> out(a.size());
  const auto va = a.values(), vb = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i % rule.inner];
  return make_result("add", a.shape(), std::move(out), {a, b}, [rule](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (needs(pa)) {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (needs(pb)) {
      auto& g = pb->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % rule.inner] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto rule = broadcast_rule("sub", a, b);
  std::vector<double> out(a.size());
  const auto va = a.values(), vb = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i % rule.inner];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [rule](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (needs(pa)) {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (needs(pb)) {
      auto& g = pb->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % rule.inner] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto rule = broadcast_rule("mul", a, b);
  std::vector<double> out(a.size());
  const auto va = a.values(), vb = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i % rule.inner];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [rule](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (needs(pa)) {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i % rule.inner];
    }
    if (needs(pb)) {
      auto& g = pb->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        g[i % rule.inner] += self.grad[i] * pa->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double x) { return x * factor; },
               pointwise_adjoint([factor](double, double) { return factor; }));
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary("add_scalar", a, [offset](double x) { return x + offset; },
               pointwise_adjoint([](double, double) { return 1.0; }));
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               pointwise_adjoint([](double, double y) { return 1.0 - y * y; }));
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               pointwise_adjoint([](double x, double) { return x > 0.0 ? 1.0 : 0.0; }));
}

namespace {
double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, stable_sigmoid,
               pointwise_adjoint([](double, double y) { return y * (1.0 - y); }));
}

Tensor log(const Tensor& a) {
  for (double v : a.values())
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  return unary("log", a, [](double x) { return std::log(x); },
               pointwise_adjoint([](double x, double) { return 1.0 / x; }));
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); },
               pointwise_adjoint([](double, double y) { return y; }));
}

Tensor softplus(const Tensor& a) {
  return unary("softplus", a,
               [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
               pointwise_adjoint([](double x, double) { return stable_sigmoid(x); }));
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw DomainError("clamp: lower bound above upper bound");
  return unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               pointwise_adjoint([lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; }));
}

// ---------------------------------------------------------------- softmax

Tensor softmax(const Tensor& a) {
  const std::size_t c = a.shape().back();
  const std::size_t rows = a.size() / c;
  std::vector<double> out(a.size());
  const auto in = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in.data() + r * c;
    double* y = out.data() + r * c;
    const double mx = *std::max_element(x, x + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= total;
  }
  return make_result("softmax", a.shape(), std::move(out), {a}, [rows, c](Node& self) {
    auto& p = self.parents[0];
    if (!needs(p)) return;
    auto& g = p->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * c;
      const double* gy = self.grad.data() + r * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < c; ++j) g[r * c + j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& a) {
  const std::size_t c = a.shape().back();
  const std::size_t rows = a.size() / c;
  std::vector<double> out(a.size());
  const auto in = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in.data() + r * c;
    const double mx = *std::max_element(x, x + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(x[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = x[j] - lse;
  }
  return make_result("log_softmax", a.shape(), std::move(out), {a}, [rows, c](Node& self) {
    auto& p = self.parents[0];
    if (!needs(p)) return;
    auto& g = p->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * c;
      const double* gy = self.grad.data() + r * c;
      double total = 0.0;
      for (std::size_t j = 0; j < c; ++j) total += gy[j];
      for (std::size_t j = 0; j < c; ++j) g[r * c + j] += gy[j] - std::exp(y[j]) * total;
    }
  });
}

// ---------------------------------------------------------------- normalization

namespace {

// Shared kernel for layer_norm and channel_norm. A normalization group is a set
// of `count` elements spaced `stride` apart starting at `offset(group)`; its
// channel (for gamma/beta) is `channel(group, element)`.
struct NormPlan {
  std::size_t groups, count, stride;
  std::function<std::size_t(std::size_t)> offset;
  std::function<std::size_t(std::size_t, std::size_t)> channel;
};

Tensor normalize(std::string_view op, const Tensor& x, const Tensor& gamma,
                 const Tensor& beta, double eps, NormPlan plan) {
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(plan.groups);
  std::vector<double> out(x.size());
  const auto vx = x.values(), vg = gamma.values(), vb = beta.values();
  for (std::size_t gidx = 0; gidx < plan.groups; ++gidx) {
    const auto base = plan.offset(gidx);
    double mu = 0.0;
    for (std::size_t e = 0; e < plan.count; ++e) mu += vx[base + e * plan.stride];
    mu /= static_cast<double>(plan.count);
    double var = 0.0;
    for (std::size_t e = 0; e < plan.count; ++e) {
      const double d = vx[base + e * plan.stride] - mu;
      var += d * d;
    }
    var /= static_cast<double>(plan.count);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[gidx] = is;
    for (std::size_t e = 0; e < plan.count; ++e) {
      const auto i = base + e * plan.stride;
      const auto ch = plan.channel(gidx, e);
      xhat[i] = (vx[i] - mu) * is;
      out[i] = vg[ch] * xhat[i] + vb[ch];
    }
  }
  return make_result(
      op, x.shape(), std::move(out), {x, gamma, beta},
      [plan, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        const auto& g = self.grad;
        if (needs(pg) || needs(pb)) {
          auto* dg = needs(pg) ? pg->ensure_grad().data() : nullptr;
          auto* db = needs(pb) ? pb->ensure_grad().data() : nullptr;
          for (std::size_t gidx = 0; gidx < plan.groups; ++gidx) {
            const auto base = plan.offset(gidx);
            for (std::size_t e = 0; e < plan.count; ++e) {
              const auto i = base + e * plan.stride;
              const auto ch = plan.channel(gidx, e);
              if (dg) dg[ch] += g[i] * xhat[i];
              if (db) db[ch] += g[i];
            }
          }
        }
        if (!needs(px)) return;
        auto& dx = px->ensure_grad();
        const auto& gamma_v = pg->value;
        const double inv_count = 1.0 / static_cast<double>(plan.count);
        for (std::size_t gidx = 0; gidx < plan.groups; ++gidx) {
          const auto base = plan.offset(gidx);
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t e = 0; e < plan.count; ++e) {
            const auto i = base + e * plan.stride;
            const double d = g[i] * gamma_v[plan.channel(gidx, e)];
            mean_d += d;
            mean_dx += d * xhat[i];
          }
          mean_d *= inv_count;
          mean_dx *= inv_count;
          for (std::size_t e = 0; e < plan.count; ++e) {
            const auto i = base + e * plan.stride;
            const double d = g[i] * gamma_v[plan.channel(gidx, e)];
            dx[i] += inv_std[gidx] * (d - mean_d - xhat[i] * mean_dx);
          }
        }
      });
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  constexpr std::string_view op = "layer_norm";
  const std::size_t c = x.shape().back();
  if (gamma.size() != c || beta.size() != c)
    shape_fail(op, "affine parameters must have " + std::to_string(c) + " entries");
  NormPlan plan{x.size() / c, c, 1, [c](std::size_t g) { return g * c; },
                [](std::size_t, std::size_t e) { return e; }};
  return normalize(op, x, gamma, beta, eps, std::move(plan));
}

Tensor channel_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  constexpr std::string_view op = "channel_norm";
  const auto d = image_dims(op, x);
  if (gamma.size() != d.channels || beta.size() != d.channels)
    shape_fail(op, "affine parameters must have " + std::to_string(d.channels) + " entries");
  const std::size_t spatial = d.height * d.width;
  const std::size_t c = d.channels;
  NormPlan plan{d.batch * c, spatial, c,
                [spatial, c](std::size_t g) { return (g / c) * spatial * c + g % c; },
                [c](std::size_t g, std::size_t) { return g % c; }};
  return normalize(op, x, gamma, beta, eps, std::move(plan));
}

// ---------------------------------------------------------------- convolution

Tensor conv2d(const Tensor& x, const Tensor& w) {
  constexpr std::string_view op = "conv2d";
  const auto d = image_dims(op, x);
  if (w.rank() != 4 || w.dim(0) != w.dim(1) || w.dim(0) % 2 == 0)
    shape_fail(op, "kernel must be [k,k,Cin,Cout] with odd k, got " + to_string(w.shape()));
  if (w.dim(2) != d.channels)
    shape_fail(op, "kernel expects " + std::to_string(w.dim(2)) + " input channels, image has " +
                       std::to_string(d.channels));
  const std::size_t k = w.dim(0), pad = k / 2, cin = d.channels, cout = w.dim(3);
  const std::size_t rows = d.batch * d.height * d.width;
  const std::size_t patch = k * k * cin;

  // im2col: one row per output pixel holding its zero-padded receptive field.
  std::vector<double> cols(rows * patch, 0.0);
  const auto vx = x.values();
  const auto H = static_cast<long>(d.height), W = static_cast<long>(d.width);
  for (std::size_t b = 0; b < d.batch; ++b)
    for (long y = 0; y < H; ++y)
      for (long xx = 0; xx < W; ++xx) {
        double* row = cols.data() + ((b * d.height + y) * d.width + xx) * patch;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long sy = y + static_cast<long>(ky) - static_cast<long>(pad);
          if (sy < 0 || sy >= H) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long sx = xx + static_cast<long>(kx) - static_cast<long>(pad);
            if (sx < 0 || sx >= W) continue;
            const double* src = vx.data() + ((b * d.height + sy) * d.width + sx) * cin;
            std::copy(src, src + cin, row + (ky * k + kx) * cin);
          }
        }
      }
  std::vector<double> out(rows * cout);
  gemm(cols.data(), rows, patch, false, w.values().data(), patch, cout, false, out.data(), false);

  return make_result(op, {d.batch, d.height, d.width, cout}, std::move(out), {x, w},
                     [d, k, pad, cin, cout, rows, patch, cols = std::move(cols)](Node& self) {
                       auto& px = self.parents[0];
                       auto& pw = self.parents[1];
                       if (needs(pw))
                         gemm(cols.data(), rows, patch, true, self.grad.data(), rows, cout, false,
                              pw->ensure_grad().data(), true);
                       if (!needs(px)) return;
                       std::vector<double> dcols(rows * patch);
                       gemm(self.grad.data(), rows, cout, false, pw->value.data(), patch, cout, true,
                            dcols.data(), false);
                       auto& dx = px->ensure_grad();
                       const auto H = static_cast<long>(d.height), W = static_cast<long>(d.width);
                       for (std::size_t b = 0; b < d.batch; ++b)
                         for (long y = 0; y < H; ++y)
                           for (long xx = 0; xx < W; ++xx) {
                             const double* row = dcols.data() + ((b * d.height + y) * d.width + xx) * patch;
                             for (std::size_t ky = 0; ky < k; ++ky) {
                               const long sy = y + static_cast<long>(ky) - static_cast<long>(pad);
                               if (sy < 0 || sy >= H) continue;
                               for (std::size_t kx = 0; kx < k; ++kx) {
                                 const long sx = xx + static_cast<long>(kx) - static_cast<long>(pad);
                                 if (sx < 0 || sx >= W) continue;
                                 double* dst = dx.data() + ((b * d.height + sy) * d.width + sx) * cin;
                                 const double* src = row + (ky * k + kx) * cin;
                                 for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
                               }
                             }
                           }
                     });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w) {
  constexpr std::string_view op = "depthwise_conv2d";
  const auto d = image_dims(op, x);
  if (w.rank() != 3 || w.dim(0) != w.dim(1) || w.dim(0) % 2 == 0)
    shape_fail(op, "kernel must be [k,k,C] with odd k, got " + to_string(w.shape()));
  if (w.dim(2) != d.channels)
    shape_fail(op, "kernel has " + std::to_string(w.dim(2)) + " channels, image has " +
                       std::to_string(d.channels));
  const std::size_t k = w.dim(0), pad = k / 2, C = d.channels;
  const auto H = static_cast<long>(d.height), W = static_cast<long>(d.width);

  // Calls fn(out_offset, in_offset, kernel_offset) for every valid tap.
  auto for_each_tap = [d, k, pad, C, H, W](auto&& fn) {
    for (std::size_t b = 0; b < d.batch; ++b)
      for (long y = 0; y < H; ++y)
        for (long xx = 0; xx < W; ++xx) {
          const std::size_t o = ((b * d.height + y) * d.width + xx) * C;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const long sy = y + static_cast<long>(ky) - static_cast<long>(pad);
            if (sy < 0 || sy >= H) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long sx = xx + static_cast<long>(kx) - static_cast<long>(pad);
              if (sx < 0 || sx >= W) continue;
              fn(o, ((b * d.height + sy) * d.width + sx) * C, (ky * k + kx) * C);
            }
          }
        }
  };

  std::vector<double> out(x.size(), 0.0);
  const double* vx = x.values().data();
  const double* vw = w.values().data();
  for_each_tap([&](std::size_t o, std::size_t i, std::size_t kw) {
    for (std::size_t c = 0; c < C; ++c) out[o + c] += vx[i + c] * vw[kw + c];
  });
  return make_result(op, x.shape(), std::move(out), {x, w}, [for_each_tap, C](Node& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    const double* g = self.grad.data();
    if (needs(px)) {
      double* dx = px->ensure_grad().data();
      const double* vw = pw->value.data();
      for_each_tap([&](std::size_t o, std::size_t i, std::size_t kw) {
        for (std::size_t c = 0; c < C; ++c) dx[i + c] += g[o + c] * vw[kw + c];
      });
    }
    if (needs(pw)) {
      double* dw = pw->ensure_grad().data();
      const double* vx = px->value.data();
      for_each_tap([&](std::size_t o, std::size_t i, std::size_t kw) {
        for (std::size_t c = 0; c < C; ++c) dw[kw + c] += g[o + c] * vx[i + c];
      });
    }
  });
}

// ---------------------------------------------------------------- pooling

Tensor global_avg_pool(const Tensor& x) {
  const auto p = pool_dims("global_avg_pool", x);
  std::vector<double> out(p.groups * p.channels, 0.0);
  const auto vx = x.values();
  const double inv = 1.0 / static_cast<double>(p.per_group);
  for (std::size_t g = 0; g < p.groups; ++g)
    for (std::size_t r = 0; r < p.per_group; ++r)
      for (std::size_t c = 0; c < p.channels; ++c)
        out[g * p.channels + c] += vx[(g * p.per_group + r) * p.channels + c];
  for (double& v : out) v *= inv;
  return make_result("global_avg_pool", {p.groups, p.channels}, std::move(out), {x},
                     [p, inv](Node& self) {
                       auto& px = self.parents[0];
                       if (!needs(px)) return;
                       auto& dx = px->ensure_grad();
                       for (std::size_t g = 0; g < p.groups; ++g)
                         for (std::size_t r = 0; r < p.per_group; ++r)
                           for (std::size_t c = 0; c < p.channels; ++c)
                             dx[(g * p.per_group + r) * p.channels + c] +=
                                 self.grad[g * p.channels + c] * inv;
                     });
}

Tensor global_max_pool(const Tensor& x) {
  const auto p = pool_dims("global_max_pool", x);
  std::vector<double> out(p.groups * p.channels, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> arg(p.groups * p.channels, 0);
  const auto vx = x.values();
  for (std::size_t g = 0; g < p.groups; ++g)
    for (std::size_t r = 0; r < p.per_group; ++r)
      for (std::size_t c = 0; c < p.channels; ++c) {
        const auto i = (g * p.per_group + r) * p.channels + c;
        if (vx[i] > out[g * p.channels + c]) {
          out[g * p.channels + c] = vx[i];
          arg[g * p.channels + c] = i;
        }
      }
  return make_result("global_max_pool", {p.groups, p.channels}, std::move(out), {x},
                     [arg = std::move(arg)](Node& self) {
                       auto& px = self.parents[0];
                       if (!needs(px)) return;
                       auto& dx = px->ensure_grad();
                       for (std::size_t j = 0; j < arg.size(); ++j) dx[arg[j]] += self.grad[j];
                     });
}

// ---------------------------------------------------------------- structure

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    shape_fail("reshape", "cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
    auto& px = self.parents[0];
    if (!needs(px)) return;
    auto& dx = px->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  constexpr std::string_view op = "concat";
  if (parts.empty()) shape_fail(op, "no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (Shape(p.shape().begin() + 1, p.shape().end()) != tail)
      shape_fail(op, "trailing extents differ: " + to_string(parts[0].shape()) + " vs " +
                         to_string(p.shape()));
    rows += p.dim(0);
  }
  Shape out_shape = parts[0].shape();
  out_shape[0] = rows;
  std::vector<double> out;
  out.reserve(numel(out_shape));
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
    sizes.push_back(p.size());
  }
  return make_result(op, std::move(out_shape), std::move(out), parts,
                     [sizes = std::move(sizes)](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t j = 0; j < sizes.size(); ++j) {
                         auto& pj = self.parents[j];
                         if (needs(pj)) {
                           auto& g = pj->ensure_grad();
                           for (std::size_t i = 0; i < sizes[j]; ++i) g[i] += self.grad[offset + i];
                         }
                         offset += sizes[j];
                       }
                     });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  constexpr std::string_view op = "gather_rows";
  if (indices.empty()) shape_fail(op, "empty index list");
  const std::size_t rows = x.dim(0);
  const std::size_t width = x.size() / rows;
  std::vector<double> out(indices.size() * width);
  const auto vx = x.values();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows)
      shape_fail(op, "index " + std::to_string(indices[r]) + " out of range for " +
                         std::to_string(rows) + " rows");
    std::copy_n(vx.data() + indices[r] * width, width, out.data() + r * width);
  }
  Shape out_shape = x.shape();
  out_shape[0] = indices.size();
  return make_result(op, std::move(out_shape), std::move(out), {x},
                     [idx = std::vector<std::size_t>(indices.begin(), indices.end()), width](Node& self) {
                       auto& px = self.parents[0];
                       if (!needs(px)) return;
                       auto& dx = px->ensure_grad();
                       for (std::size_t r = 0; r < idx.size(); ++r)
                         for (std::size_t c = 0; c < width; ++c)
                           dx[idx[r] * width + c] += self.grad[r * width + c];
                     });
}

// ---------------------------------------------------------------- reductions

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result("sum", {1}, {total}, {x}, [](Node& self) {
    auto& px = self.parents[0];
    if (!needs(px)) return;
    auto& dx = px->ensure_grad();
    for (double& v : dx) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  return make_result("mean", {1}, {total * inv}, {x}, [inv](Node& self) {
    auto& px = self.parents[0];
    if (!needs(px)) return;
    auto& dx = px->ensure_grad();
    for (double& v : dx) v += self.grad[0] * inv;
  });
}

Tensor squared_norm(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v * v;
  return make_result("squared_norm", {1}, {total}, {x}, [](Node& self) {
    auto& px = self.parents[0];
    if (!needs(px)) return;
    auto& dx = px->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 2.0 * px->value[i] * self.grad[0];
  });
}

}  // namespace jigsaw::ad
