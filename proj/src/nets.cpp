// SPDX-License-Identifier: Apache-2.0

#include "jigsaw/nets.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include "binary_io.hpp"
#include "jigsaw/ops.hpp"

namespace jigsaw {

using ad::Shape;
using ad::Tensor;

// ---------------------------------------------------------------- ParamSet

Tensor ParamSet::add(const std::string& name, Tensor value) {
  if (contains(name)) throw Error("params: duplicate parameter name " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, value);
  return value;
}

const Tensor& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("params: no parameter named " + name);
  return entries_[it->second].second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t total = 0;
  for (const auto& [_, t] : entries_) total += t.size();
  return total;
}

void ParamSet::zero_grad() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

void ParamSet::round_to_float() {
  for (auto& [_, t] : entries_)
    for (double& v : t.mutable_values()) v = static_cast<double>(static_cast<float>(v));
}

Tensor init_uniform(Shape shape, std::size_t fan_in, Pcg32& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(ad::numel(shape));
  for (double& v : values) v = bound * (2.0 * rng.uniform() - 1.0);
  return Tensor::parameter(std::move(shape), std::move(values));
}

namespace {

Tensor zeros_param(Shape shape) {
  const auto n = ad::numel(shape);
  return Tensor::parameter(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor ones_param(Shape shape) {
  const auto n = ad::numel(shape);
  return Tensor::parameter(std::move(shape), std::vector<double>(n, 1.0));
}

[[noreturn]] void width_fail(const std::string& op, std::size_t want, std::size_t got) {
  throw ShapeError(op + ": expected width " + std::to_string(want) + ", got " + std::to_string(got));
}

// Lifts [m, m, c] to [1, m, m, c]; returns whether it did.
Tensor as_image(const Tensor& grid, bool& lifted) {
  lifted = grid.rank() == 3;
  if (lifted) return ad::reshape(grid, {1, grid.dim(0), grid.dim(1), grid.dim(2)});
  return grid;
}

Tensor restore(const Tensor& image, bool lifted) {
  if (!lifted) return image;
  return ad::reshape(image, {image.dim(1), image.dim(2), image.dim(3)});
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return ad::matmul(x, w) + b; }

}  // namespace

// ---------------------------------------------------------------- blocks

MlpParams make_mlp(ParamSet& ps, const std::string& prefix, std::size_t in, std::size_t out, Pcg32& rng) {
  const std::size_t hidden = in / 2;
  if (hidden == 0) throw Error("mlp_embed: input width must be at least 2");
  MlpParams p;
  p.w1 = ps.add(prefix + ".w1", init_uniform({in, hidden}, in, rng));
  p.b1 = ps.add(prefix + ".b1", zeros_param({hidden}));
  p.w2 = ps.add(prefix + ".w2", init_uniform({hidden, out}, hidden, rng));
  p.b2 = ps.add(prefix + ".b2", zeros_param({out}));
  return p;
}

Tensor mlp_embed(const MlpParams& p, const Tensor& x) {
  if (x.shape().back() != p.w1.dim(0)) width_fail("mlp_embed", p.w1.dim(0), x.shape().back());
  auto h = ad::relu(linear(x, p.w1, p.b1));
  return ad::relu(linear(h, p.w2, p.b2));
}

SquarePlan square_plan(std::size_t n) {
  if (n == 0) throw Error("squaring: empty bag");
  SquarePlan plan;
  plan.m = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  while (plan.m * plan.m < n) ++plan.m;
  while (plan.m > 1 && (plan.m - 1) * (plan.m - 1) >= n) --plan.m;
  plan.pad_count = plan.m * plan.m - n;
  plan.slots.resize(plan.m * plan.m);
  // pad_count never exceeds n, so duplicates never wrap.
  for (std::size_t i = 0; i < plan.slots.size(); ++i) plan.slots[i] = i < n ? i : i - n;
  return plan;
}

Tensor squaring(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("squaring: expected [n, c], got " + ad::to_string(x.shape()));
  const auto plan = square_plan(x.dim(0));
  return ad::reshape(ad::gather_rows(x, plan.slots), {plan.m, plan.m, x.dim(1)});
}

PpegParams make_ppeg(ParamSet& ps, const std::string& prefix, std::size_t channels, Pcg32& rng) {
  PpegParams p;
  p.k7 = ps.add(prefix + ".k7", init_uniform({7, 7, channels}, 49, rng));
  p.k5 = ps.add(prefix + ".k5", init_uniform({5, 5, channels}, 25, rng));
  p.k3 = ps.add(prefix + ".k3", init_uniform({3, 3, channels}, 9, rng));
  return p;
}

Tensor ppeg(const PpegParams& p, const Tensor& grid) {
  if (grid.rank() != 3 && grid.rank() != 4)
    throw ShapeError("ppeg: expected a [m, m, C] or [B, m, m, C] grid, got " + ad::to_string(grid.shape()));
  if (grid.shape().back() != p.k3.dim(2)) width_fail("ppeg", p.k3.dim(2), grid.shape().back());
  bool lifted = false;
  auto g = as_image(grid, lifted);
  auto out = g + ad::depthwise_conv2d(g, p.k7) + ad::depthwise_conv2d(g, p.k5) + ad::depthwise_conv2d(g, p.k3);
  return restore(out, lifted);
}

Tensor sinusoidal_pe(std::size_t n, std::size_t c) {
  if (c == 0 || c % 2 != 0) throw Error("sinusoidal_pe: channel count must be even, got " + std::to_string(c));
  std::vector<double> pe(n * c);
  for (std::size_t pos = 0; pos < n; ++pos)
    for (std::size_t i = 0; i < c / 2; ++i) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(c));
      pe[pos * c + 2 * i] = std::sin(angle);
      pe[pos * c + 2 * i + 1] = std::cos(angle);
    }
  return Tensor::constant({n, c}, std::move(pe));
}

AbmilParams make_abmil(ParamSet& ps, const std::string& prefix, std::size_t dim, std::size_t hidden, Pcg32& rng) {
  AbmilParams p;
  p.v = ps.add(prefix + ".v", init_uniform({dim, hidden}, dim, rng));
  p.w = ps.add(prefix + ".w", init_uniform({hidden, 1}, hidden, rng));
  return p;
}

AttentionPooled abmil_pool(const AbmilParams& p, const Tensor& x) {
  if (x.rank() != 2 && x.rank() != 3) throw ShapeError("abmil_pool: expected [n, E] or [B, n, E]");
  if (x.shape().back() != p.v.dim(0)) width_fail("abmil_pool", p.v.dim(0), x.shape().back());
  auto x3 = x.rank() == 3 ? x : ad::reshape(x, {1, x.dim(0), x.dim(1)});
  const std::size_t B = x3.dim(0), n = x3.dim(1), E = x3.dim(2);
  auto scores = ad::matmul(ad::tanh(ad::matmul(x3, p.v)), p.w);  // [B, n, 1]
  auto weights = ad::softmax(ad::reshape(scores, {B, n}));
  auto bag = ad::matmul(ad::reshape(weights, {B, 1, n}), x3);  // [B, 1, E]
  return {ad::reshape(bag, {B, E}), weights};
}

Tensor self_attention(const AttentionParams& p, const Tensor& x) {
  if (x.shape().back() != p.wq.dim(0)) width_fail("self_attention", p.wq.dim(0), x.shape().back());
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(p.wq.dim(1)));
  auto q = ad::matmul(x, p.wq);
  auto k = ad::matmul(x, p.wk);
  auto v = ad::matmul(x, p.wv);
  auto attn = ad::softmax(ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt_dk));
  return ad::matmul(attn, v);
}

TransformerParams make_transformer(ParamSet& ps, const std::string& prefix, std::size_t dim, Pcg32& rng) {
  TransformerParams p;
  p.ln1_g = ps.add(prefix + ".ln1.gamma", ones_param({dim}));
  p.ln1_b = ps.add(prefix + ".ln1.beta", zeros_param({dim}));
  p.attn.wq = ps.add(prefix + ".wq", init_uniform({dim, dim}, dim, rng));
  p.attn.wk = ps.add(prefix + ".wk", init_uniform({dim, dim}, dim, rng));
  p.attn.wv = ps.add(prefix + ".wv", init_uniform({dim, dim}, dim, rng));
  p.wo = ps.add(prefix + ".wo", init_uniform({dim, dim}, dim, rng));
  p.ln2_g = ps.add(prefix + ".ln2.gamma", ones_param({dim}));
  p.ln2_b = ps.add(prefix + ".ln2.beta", zeros_param({dim}));
  p.w1 = ps.add(prefix + ".ffn.w1", init_uniform({dim, 4 * dim}, dim, rng));
  p.b1 = ps.add(prefix + ".ffn.b1", zeros_param({4 * dim}));
  p.w2 = ps.add(prefix + ".ffn.w2", init_uniform({4 * dim, dim}, 4 * dim, rng));
  p.b2 = ps.add(prefix + ".ffn.b2", zeros_param({dim}));
  return p;
}

Tensor transformer_block(const TransformerParams& p, const Tensor& x) {
  if (x.shape().back() != p.ln1_g.size()) width_fail("transformer_block", p.ln1_g.size(), x.shape().back());
  auto x1 = x + ad::matmul(self_attention(p.attn, ad::layer_norm(x, p.ln1_g, p.ln1_b)), p.wo);
  auto h = ad::relu(linear(ad::layer_norm(x1, p.ln2_g, p.ln2_b), p.w1, p.b1));
  return x1 + linear(h, p.w2, p.b2);
}

ResidualParams make_residual(ParamSet& ps, const std::string& prefix, std::size_t channels, Pcg32& rng) {
  ResidualParams p;
  p.conv1 = ps.add(prefix + ".conv1", init_uniform({3, 3, channels, channels}, 9 * channels, rng));
  p.n1_g = ps.add(prefix + ".norm1.gamma", ones_param({channels}));
  p.n1_b = ps.add(prefix + ".norm1.beta", zeros_param({channels}));
  p.conv2 = ps.add(prefix + ".conv2", init_uniform({3, 3, channels, channels}, 9 * channels, rng));
  p.n2_g = ps.add(prefix + ".norm2.gamma", ones_param({channels}));
  p.n2_b = ps.add(prefix + ".norm2.beta", zeros_param({channels}));
  return p;
}

Tensor residual_block(const ResidualParams& p, const Tensor& grid) {
  if (grid.rank() != 3 && grid.rank() != 4)
    throw ShapeError("residual_block: expected a [m, m, C] or [B, m, m, C] grid, got " + ad::to_string(grid.shape()));
  if (grid.shape().back() != p.conv1.dim(2)) width_fail("residual_block", p.conv1.dim(2), grid.shape().back());
  bool lifted = false;
  auto g = as_image(grid, lifted);
  auto h = ad::relu(ad::channel_norm(ad::conv2d(g, p.conv1), p.n1_g, p.n1_b));
  h = ad::channel_norm(ad::conv2d(h, p.conv2), p.n2_g, p.n2_b);
  return restore(ad::relu(g + h), lifted);
}

Tensor baseline_pool(PoolMode mode, const Tensor& x) {
  if (x.rank() != 2 && x.rank() != 3) throw ShapeError("baseline_pool: expected [n, c] or [B, n, c]");
  return mode == PoolMode::mean ? ad::global_avg_pool(x) : ad::global_max_pool(x);
}

Tensor classify(const HeadParams& p, const Tensor& f) {
  if (f.shape().back() != p.w.dim(0)) width_fail("classify", p.w.dim(0), f.shape().back());
  return linear(ad::global_avg_pool(f), p.w, p.b);
}

// ---------------------------------------------------------------- config

std::size_t ModelConfig::output_width() const {
  switch (head) {
    case HeadKind::binary: return 1;
    case HeadKind::multiclass: return classes;
    case HeadKind::survival: return bins;
  }
  return 1;
}

void ModelConfig::validate() const {
  if (input_dim < 2) throw Error("model: input_dim must be at least 2");
  if (embed_dim == 0 || attention_dim == 0) throw Error("model: embed_dim and attention_dim must be positive");
  if (!(lambda >= 0.0)) throw Error("model: lambda must satisfy lambda >= 0, got " + std::to_string(lambda));
  if (head == HeadKind::survival && bins < 2) throw Error("model: survival head needs bins >= 2");
  if (!(survival_alpha >= 0.0 && survival_alpha <= 1.0)) throw Error("model: survival_alpha must lie in [0, 1]");
  if (head == HeadKind::multiclass && classes < 2) throw Error("model: multiclass head needs classes >= 2");
  if (pe == PosEncoding::sinusoidal && embed_dim % 2 != 0)
    throw Error("model: sinusoidal encoding needs an even embed_dim");
  if (pe == PosEncoding::ppeg && !uses_grid())
    throw Error("model: pe=ppeg needs a grid variant (transformer or cnn); use pe=none or pe=sinusoidal for " +
                to_string(variant));
  if (!(optimizer.lr > 0.0)) throw Error("model: lr must be positive");
  if (!(optimizer.weight_decay >= 0.0)) throw Error("model: weight_decay must be nonnegative");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
    throw Error("model: betas must lie in [0, 1)");
  if (!(optimizer.eps > 0.0)) throw Error("model: eps must be positive");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::transformer: return "transformer";
    case Variant::cnn: return "cnn";
    case Variant::abmil: return "abmil";
    case Variant::mean_pool: return "mean-pool";
    case Variant::max_pool: return "max-pool";
  }
  return "?";
}

std::string to_string(PosEncoding p) {
  switch (p) {
    case PosEncoding::none: return "none";
    case PosEncoding::sinusoidal: return "sinusoidal";
    case PosEncoding::ppeg: return "ppeg";
  }
  return "?";
}

std::string to_string(HeadKind h) {
  switch (h) {
    case HeadKind::binary: return "binary";
    case HeadKind::multiclass: return "multiclass";
    case HeadKind::survival: return "survival";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  for (auto v : {Variant::transformer, Variant::cnn, Variant::abmil, Variant::mean_pool, Variant::max_pool})
    if (to_string(v) == s) return v;
  throw Error("unknown architecture '" + s + "' (transformer, cnn, abmil, mean-pool, max-pool)");
}

PosEncoding parse_pos_encoding(const std::string& s) {
  for (auto p : {PosEncoding::none, PosEncoding::sinusoidal, PosEncoding::ppeg})
    if (to_string(p) == s) return p;
  throw Error("unknown positional encoding '" + s + "' (none, sinusoidal, ppeg)");
}

HeadKind parse_head(const std::string& s) {
  for (auto h : {HeadKind::binary, HeadKind::multiclass, HeadKind::survival})
    if (to_string(h) == s) return h;
  throw Error("unknown head '" + s + "' (binary, multiclass, survival)");
}

// ---------------------------------------------------------------- model

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Pcg32 rng = derive_stream(config_.seed, 0x696e6974);  // "init"
  const auto E = config_.embed_dim;
  mlp_ = make_mlp(params_, "mlp", config_.input_dim, E, rng);
  if (config_.pe == PosEncoding::ppeg) ppeg_ = make_ppeg(params_, "ppeg", E, rng);
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    const std::string name = "block" + std::to_string(b);
    if (config_.variant == Variant::transformer) transformers_.push_back(make_transformer(params_, name, E, rng));
    if (config_.variant == Variant::cnn) residuals_.push_back(make_residual(params_, name, E, rng));
  }
  if (config_.variant == Variant::abmil) abmil_ = make_abmil(params_, "abmil", E, config_.attention_dim, rng);
  const auto out = config_.output_width();
  head_.w = params_.add("head.w", init_uniform({E, out}, E, rng));
  head_.b = params_.add("head.b", zeros_param({out}));
}

std::size_t Model::slot_count(std::size_t n) const {
  if (!config_.uses_grid()) return n;
  const auto m = square_plan(n).m;
  return m * m;
}

std::vector<std::size_t> Model::slot_sources(std::size_t n) const {
  if (config_.uses_grid()) return square_plan(n).slots;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

Tensor Model::features(const Tensor& slots) const {
  if (slots.rank() != 3) throw ShapeError("model: expected stacked slots [B, S, d], got " + ad::to_string(slots.shape()));
  const std::size_t B = slots.dim(0), S = slots.dim(1), E = config_.embed_dim;
  auto f = mlp_embed(mlp_, slots);
  if (config_.pe == PosEncoding::sinusoidal) f = f + sinusoidal_pe(S, E);
  if (!config_.uses_grid()) return f;

  const auto m = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(S))));
  if (m * m != S) throw ShapeError("model: slot count " + std::to_string(S) + " is not a perfect square");
  auto grid = ad::reshape(f, {B, m, m, E});
  if (config_.pe == PosEncoding::ppeg) grid = ppeg(ppeg_, grid);
  if (config_.variant == Variant::cnn) {
    for (const auto& block : residuals_) grid = residual_block(block, grid);
    return ad::reshape(grid, {B, S, E});
  }
  auto seq = ad::reshape(grid, {B, S, E});
  for (const auto& block : transformers_) seq = transformer_block(block, seq);
  return seq;
}

Tensor Model::logits(const Tensor& features) const {
  switch (config_.variant) {
    case Variant::abmil: return linear(abmil_pool(abmil_, features).bag, head_.w, head_.b);
    case Variant::mean_pool: return linear(baseline_pool(PoolMode::mean, features), head_.w, head_.b);
    case Variant::max_pool: return linear(baseline_pool(PoolMode::max, features), head_.w, head_.b);
    case Variant::transformer:
    case Variant::cnn: return classify(head_, features);
  }
  throw Error("model: unknown variant");
}

Tensor Model::forward_backbone(const Tensor& x) const {
  if (x.rank() != 2) throw ShapeError("forward_backbone: expected [n, d], got " + ad::to_string(x.shape()));
  const auto sources = slot_sources(x.dim(0));
  auto slots = ad::reshape(ad::gather_rows(x, sources), {1, sources.size(), x.dim(1)});
  auto f = features(slots);
  return ad::reshape(f, {sources.size(), config_.embed_dim});
}

std::vector<double> Model::predict(const Tensor& x) const {
  ad::NoGradGuard guard;
  auto f = forward_backbone(x);
  auto z = logits(ad::reshape(f, {1, f.dim(0), f.dim(1)}));
  return {z.values().begin(), z.values().end()};
}

// ---------------------------------------------------------------- checkpoints

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

void write_checkpoint(const ParamSet& params, const std::filesystem::path& path) {
  io::Writer w;
  w.bytes("JMWT", 4);
  w.le(kCheckpointVersion);
  for (const auto& [name, t] : params.entries()) {
    if (name.size() > 0xffff) throw Error("checkpoint: parameter name too long");
    w.le(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le(static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) w.le(static_cast<std::uint32_t>(e));
    for (double v : t.values()) w.le(static_cast<float>(v));
  }
  io::spill(path, w.out);
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::slurp(path);
  io::Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(r.here(), "JMWT", 4) != 0)
    throw Error(path.string() + ": bad magic at byte offset 0: expected \"JMWT\"");
  r.skip(4);
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw Error(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  std::vector<CheckpointEntry> out;
  try {
    while (r.remaining() > 0) {
      CheckpointEntry e;
      const auto len = r.le<std::uint16_t>("name length");
      r.need(len, "name");
      e.name.assign(reinterpret_cast<const char*>(r.here()), len);
      r.skip(len);
      const auto rank = r.le<std::uint8_t>("rank");
      for (std::size_t i = 0; i < rank; ++i) e.shape.push_back(r.le<std::uint32_t>("extent"));
      const auto count = ad::numel(e.shape);
      r.need(count * 4, "values of " + e.name);
      e.values.resize(count);
      for (auto& v : e.values) v = r.le<float>("value");
      out.push_back(std::move(e));
    }
  } catch (const Error& err) {
    throw Error(path.string() + ": " + err.what());
  }
  return out;
}

void load_checkpoint(ParamSet& params, const std::filesystem::path& path) {
  const auto entries = read_checkpoint(path);
  if (entries.size() < params.size())
    throw Error(path.string() + ": holds " + std::to_string(entries.size()) + " parameters, model needs " +
                std::to_string(params.size()));
  if (entries.size() > params.size())
    throw Error(path.string() + ": trailing records after the model's " + std::to_string(params.size()) +
                " parameters");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, tensor] = params.entries()[i];
    if (entries[i].name != name)
      throw Error(path.string() + ": record " + std::to_string(i) + " is '" + entries[i].name + "', expected '" +
                  name + "'");
    if (entries[i].shape != tensor.shape())
      throw Error(path.string() + ": shape of '" + name + "' is " + ad::to_string(entries[i].shape) +
                  ", model expects " + ad::to_string(tensor.shape()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto t = params.entries()[i].second;
    auto dst = t.mutable_values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<double>(entries[i].values[k]);
  }
}

}  // namespace jigsaw
