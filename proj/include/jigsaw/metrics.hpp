// SPDX-License-Identifier: Apache-2.0
//
// Task losses (scalar and differentiable forms) and evaluation metrics.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "jigsaw/tensor.hpp"

namespace jigsaw {

struct SurvivalRecord {
  double time = 0.0;
  int event = 1;  // 1 observed, 0 censored
  int bin = -1;   // assigned by time_bins / assign_bins
};

inline constexpr double kProbClamp = 1e-7;

// ---- scalar forms

/// Binary cross-entropy on a logit, in nats.
double bce(double logit, int y);
/// Discrete-time survival negative log-likelihood from J hazard logits.
/// Censored records are weighted by (1 - alpha), alpha in [0, 1].
double survival_nll(std::span<const double> hazard_logits, int bin, int event, double alpha = 0.0);
/// Negative expected discrete survival: -sum_j prod_{k<=j} (1 - h_k).
double risk_score(std::span<const double> hazard_logits);

// ---- differentiable forms (logits of one bag, any shape holding the values)

ad::Tensor bce_loss(const ad::Tensor& logit, int y);
ad::Tensor cross_entropy_loss(const ad::Tensor& logits, std::size_t label);
ad::Tensor survival_nll_loss(const ad::Tensor& hazard_logits, int bin, int event, double alpha = 0.0);

// ---- survival binning

struct BinEdges {
  std::vector<double> cuts;  // J-1 strictly increasing cut points
  std::size_t bins() const { return cuts.size() + 1; }
};

/// Cut points at the 1/J..(J-1)/J quantiles of uncensored times (linear
/// interpolation between order statistics), then assigns every record.
BinEdges time_bins(std::vector<SurvivalRecord>& records, std::size_t bins);
/// Bin j covers (cut[j-1], cut[j]]; times past the last cut land in the last bin.
std::size_t bin_of(const BinEdges& edges, double time);
void assign_bins(std::vector<SurvivalRecord>& records, const BinEdges& edges);

// ---- ranking metrics

/// Harrell's concordance; ties in risk count one half.
double c_index(std::span<const double> risks, std::span<const SurvivalRecord> records);
/// Mann-Whitney AUC with average ranks for ties. Rejects single-class labels.
double auc(std::span<const double> scores, std::span<const int> labels);

struct BinaryMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;
  std::optional<double> auc;  // empty when only one class is present
};

/// `probabilities` are sigmoid outputs; the decision threshold is 0.5.
BinaryMetrics binary_metrics(std::span<const double> probabilities, std::span<const int> labels);

}  // namespace jigsaw
