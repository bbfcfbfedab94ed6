// SPDX-License-Identifier: Apache-2.0
//
// Network blocks, the model variants and parameter checkpoints.
//
// Blocks accept a single bag ([n, c]) or a stack of equally sized bags
// ([B, n, c]); grids are channels-last ([B, m, m, c]).

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "jigsaw/rng.hpp"
#include "jigsaw/tensor.hpp"

namespace jigsaw {

// ---------------------------------------------------------------- parameters

/// Named learnable tensors in creation order.
class ParamSet {
 public:
  ad::Tensor add(const std::string& name, ad::Tensor value);
  const ad::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  const std::vector<std::pair<std::string, ad::Tensor>>& entries() const { return entries_; }
  void zero_grad();
  /// Rounds every value to the nearest float, matching what a checkpoint stores.
  void round_to_float();

 private:
  std::vector<std::pair<std::string, ad::Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Uniform in +-1/sqrt(fan_in).
ad::Tensor init_uniform(ad::Shape shape, std::size_t fan_in, Pcg32& rng);

// ---------------------------------------------------------------- blocks

struct MlpParams {
  ad::Tensor w1, b1, w2, b2;  // [d, d/2], [d/2], [d/2, E], [E]
};
MlpParams make_mlp(ParamSet& ps, const std::string& prefix, std::size_t in, std::size_t out, Pcg32& rng);
/// Two linear+ReLU stages, widths d -> floor(d/2) -> E.
ad::Tensor mlp_embed(const MlpParams& p, const ad::Tensor& x);

struct SquarePlan {
  std::size_t m = 0;
  std::size_t pad_count = 0;
  std::vector<std::size_t> slots;  // source instance of each of the m*m slots
};
/// m = ceil(sqrt(n)); slot i < n holds instance i, slot n + j duplicates instance j.
SquarePlan square_plan(std::size_t n);
/// [n, c] -> [m, m, c] following square_plan.
ad::Tensor squaring(const ad::Tensor& x);

struct PpegParams {
  ad::Tensor k7, k5, k3;  // depthwise kernels [k, k, C]
};
PpegParams make_ppeg(ParamSet& ps, const std::string& prefix, std::size_t channels, Pcg32& rng);
/// grid + DW7(grid) + DW5(grid) + DW3(grid).
ad::Tensor ppeg(const PpegParams& p, const ad::Tensor& grid);

/// [n, c] table with sin at even and cos at odd columns; odd c is rejected.
ad::Tensor sinusoidal_pe(std::size_t n, std::size_t c);

struct AbmilParams {
  ad::Tensor v;  // [E, L]; the transpose of the usual V
  ad::Tensor w;  // [L, 1]
};
AbmilParams make_abmil(ParamSet& ps, const std::string& prefix, std::size_t dim, std::size_t hidden, Pcg32& rng);
struct AttentionPooled {
  ad::Tensor bag;      // [B, E]
  ad::Tensor weights;  // [B, n], rows sum to 1
};
AttentionPooled abmil_pool(const AbmilParams& p, const ad::Tensor& x);

struct AttentionParams {
  ad::Tensor wq, wk, wv;  // [E, d_k]
};
/// softmax(Q K^T / sqrt(d_k)) V.
ad::Tensor self_attention(const AttentionParams& p, const ad::Tensor& x);

struct TransformerParams {
  AttentionParams attn;
  ad::Tensor wo;                    // [d_k, E]
  ad::Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  ad::Tensor w1, b1, w2, b2;        // E -> 4E -> E
};
TransformerParams make_transformer(ParamSet& ps, const std::string& prefix, std::size_t dim, Pcg32& rng);
/// Pre-norm: X1 = X + Wo SelfAttn(LN X); out = X1 + FFN(LN X1).
ad::Tensor transformer_block(const TransformerParams& p, const ad::Tensor& x);

struct ResidualParams {
  ad::Tensor conv1, conv2;  // [3, 3, C, C]
  ad::Tensor n1_g, n1_b, n2_g, n2_b;
};
ResidualParams make_residual(ParamSet& ps, const std::string& prefix, std::size_t channels, Pcg32& rng);
/// relu(grid + CN(conv(relu(CN(conv(grid)))))).
ad::Tensor residual_block(const ResidualParams& p, const ad::Tensor& grid);

enum class PoolMode { mean, max };
/// Columnwise mean or max over instances: [n, c] -> [1, c], [B, n, c] -> [B, c].
ad::Tensor baseline_pool(PoolMode mode, const ad::Tensor& x);

struct HeadParams {
  ad::Tensor w, b;  // [E, out], [out]
};
/// logits = mean over slots of F, times W, plus b: [.., S, E] -> [B, out].
ad::Tensor classify(const HeadParams& p, const ad::Tensor& f);

// ---------------------------------------------------------------- model

enum class Variant { transformer, cnn, abmil, mean_pool, max_pool };
enum class PosEncoding { none, sinusoidal, ppeg };
enum class HeadKind { binary, multiclass, survival };

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct ModelConfig {
  Variant variant = Variant::transformer;
  std::size_t input_dim = 64;
  std::size_t embed_dim = 128;
  std::size_t attention_dim = 128;  // L of the attention-pooling baseline
  std::size_t blocks = 2;
  double lambda = 1.0;
  PosEncoding pe = PosEncoding::ppeg;
  HeadKind head = HeadKind::binary;
  std::size_t classes = 2;  // multiclass head width
  std::size_t bins = 4;     // survival head width
  double survival_alpha = 0.0;  // weight 1 - alpha on censored records in the NLL
  AdamWConfig optimizer;
  std::uint64_t seed = 0;

  std::size_t output_width() const;
  /// transformer and cnn reshape instances onto a square grid.
  bool uses_grid() const { return variant == Variant::transformer || variant == Variant::cnn; }
  void validate() const;
};

std::string to_string(Variant v);
std::string to_string(PosEncoding p);
std::string to_string(HeadKind h);
Variant parse_variant(const std::string& s);
PosEncoding parse_pos_encoding(const std::string& s);
HeadKind parse_head(const std::string& s);

class Model {
 public:
  /// Parameters are drawn from a stream derived from config.seed only.
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const HeadParams& head() const { return head_; }

  /// Number of feature rows the backbone sees for an n-instance bag.
  std::size_t slot_count(std::size_t n) const;
  /// Source instance per slot (padding for grid variants, identity otherwise).
  std::vector<std::size_t> slot_sources(std::size_t n) const;

  /// Per-slot features for stacked, already padded inputs [B, S, d] -> [B, S, E].
  ad::Tensor features(const ad::Tensor& slots) const;
  /// Bag logits from per-slot features [B, S, E] -> [B, out].
  ad::Tensor logits(const ad::Tensor& features) const;

  /// Unbatched pipeline: [n, d] -> per-slot features [S, E].
  ad::Tensor forward_backbone(const ad::Tensor& x) const;
  /// [n, d] -> logits [out].
  std::vector<double> predict(const ad::Tensor& x) const;

 private:
  ModelConfig config_;
  ParamSet params_;
  MlpParams mlp_;
  PpegParams ppeg_;
  std::vector<TransformerParams> transformers_;
  std::vector<ResidualParams> residuals_;
  AbmilParams abmil_;
  HeadParams head_;
};

// ---------------------------------------------------------------- checkpoints

struct CheckpointEntry {
  std::string name;
  ad::Shape shape;
  std::vector<float> values;
};

void write_checkpoint(const ParamSet& params, const std::filesystem::path& path);
std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path);
/// Copies a checkpoint into an existing parameter set; names, order and
/// shapes must match exactly.
void load_checkpoint(ParamSet& params, const std::filesystem::path& path);

}  // namespace jigsaw
