// SPDX-License-Identifier: Apache-2.0

#include "jigsaw/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "jigsaw/ops.hpp"

namespace jigsaw {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

void check_bin(std::size_t bins, int bin, int event, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("survival: alpha must lie in [0, 1]");
  if (bins < 2) throw Error("survival: need at least 2 hazard bins, got " + std::to_string(bins));
  if (bin < 0 || static_cast<std::size_t>(bin) >= bins)
    throw Error("survival: bin " + std::to_string(bin) + " outside [0, " + std::to_string(bins) + ")");
  if (event != 0 && event != 1) throw Error("survival: event flag must be 0 or 1");
}

}  // namespace

double bce(double logit, int y) {
  // softplus(z) - y z
  return std::max(logit, 0.0) + std::log1p(std::exp(-std::abs(logit))) - y * logit;
}

double survival_nll(std::span<const double> hazard_logits, int bin, int event, double alpha) {
  check_bin(hazard_logits.size(), bin, event, alpha);
  double log_surv_before = 0.0;
  for (int k = 0; k < bin; ++k) log_surv_before += std::log(clamp_prob(1.0 - sigmoid(hazard_logits[k])));
  const double h = sigmoid(hazard_logits[bin]);
  if (event == 1) return -(log_surv_before + std::log(clamp_prob(h)));
  return -(1.0 - alpha) * (log_surv_before + std::log(clamp_prob(1.0 - h)));
}

double risk_score(std::span<const double> hazard_logits) {
  if (hazard_logits.size() < 2) throw Error("risk_score: need at least 2 hazard bins");
  double surv = 1.0, total = 0.0;
  for (double z : hazard_logits) {
    surv *= 1.0 - sigmoid(z);
    total += surv;
  }
  return -total;
}

ad::Tensor bce_loss(const ad::Tensor& logit, int y) {
  if (logit.size() != 1) throw ShapeError("bce_loss: expected one logit, got " + ad::to_string(logit.shape()));
  if (y != 0 && y != 1) throw Error("bce_loss: label must be 0 or 1");
  auto z = ad::reshape(logit, {1});
  return ad::sum(ad::softplus(z) - z * static_cast<double>(y));
}

ad::Tensor cross_entropy_loss(const ad::Tensor& logits, std::size_t label) {
  if (label >= logits.size())
    throw Error("cross_entropy_loss: class " + std::to_string(label) + " outside " +
                std::to_string(logits.size()) + " logits");
  auto lp = ad::log_softmax(ad::reshape(logits, {logits.size()}));
  std::vector<double> pick(logits.size(), 0.0);
  pick[label] = -1.0;
  return ad::sum(lp * ad::Tensor::constant({logits.size()}, std::move(pick)));
}

ad::Tensor survival_nll_loss(const ad::Tensor& hazard_logits, int bin, int event, double alpha) {
  const std::size_t bins = hazard_logits.size();
  check_bin(bins, bin, event, alpha);
  auto h = ad::sigmoid(ad::reshape(hazard_logits, {bins}));
  auto log_h = ad::log(ad::clamp(h, kProbClamp, 1.0 - kProbClamp));
  auto log_1mh = ad::log(ad::clamp(ad::add_scalar(h * -1.0, 1.0), kProbClamp, 1.0 - kProbClamp));
  std::vector<double> w_h(bins, 0.0), w_1mh(bins, 0.0);
  const double w = event == 1 ? -1.0 : -(1.0 - alpha);
  for (int k = 0; k < bin; ++k) w_1mh[k] = w;
  if (event == 1) w_h[bin] = w;
  else w_1mh[bin] = w;
  return ad::sum(log_h * ad::Tensor::constant({bins}, std::move(w_h))) +
         ad::sum(log_1mh * ad::Tensor::constant({bins}, std::move(w_1mh)));
}

BinEdges time_bins(std::vector<SurvivalRecord>& records, std::size_t bins) {
  if (bins < 2) throw Error("time_bins: need at least 2 bins, got " + std::to_string(bins));
  std::vector<double> times;
  for (const auto& r : records)
    if (r.event == 1) times.push_back(r.time);
  if (times.empty()) throw Error("time_bins: no uncensored records to place cut points");
  std::sort(times.begin(), times.end());
  if (times.front() == times.back())
    throw Error("time_bins: all event times equal " + std::to_string(times.front()) +
                "; cannot place cut points");
  BinEdges edges;
  const double last = static_cast<double>(times.size() - 1);
  for (std::size_t q = 1; q < bins; ++q) {
    const double pos = last * static_cast<double>(q) / static_cast<double>(bins);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, times.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    edges.cuts.push_back(times[lo] + frac * (times[hi] - times[lo]));
  }
  for (std::size_t j = 1; j < edges.cuts.size(); ++j)
    if (!(edges.cuts[j] > edges.cuts[j - 1]))
      throw Error("time_bins: degenerate cut points (" + std::to_string(edges.cuts[j - 1]) + " then " +
                  std::to_string(edges.cuts[j]) + "); too few distinct event times for " +
                  std::to_string(bins) + " bins");
  assign_bins(records, edges);
  return edges;
}

std::size_t bin_of(const BinEdges& edges, double time) {
  return static_cast<std::size_t>(std::lower_bound(edges.cuts.begin(), edges.cuts.end(), time) -
                                  edges.cuts.begin());
}

void assign_bins(std::vector<SurvivalRecord>& records, const BinEdges& edges) {
  for (auto& r : records) r.bin = static_cast<int>(bin_of(edges, r.time));
}

double c_index(std::span<const double> risks, std::span<const SurvivalRecord> records) {
  if (risks.size() != records.size()) throw Error("c_index: risks and records differ in length");
  double concordant = 0.0;
  std::size_t comparable = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].event != 1) continue;
    for (std::size_t k = 0; k < records.size(); ++k) {
      if (!(records[i].time < records[k].time)) continue;
      ++comparable;
      if (risks[i] > risks[k]) concordant += 1.0;
      else if (risks[i] == risks[k]) concordant += 0.5;
    }
  }
  if (comparable == 0) throw Error("c_index: no comparable pairs");
  return concordant / static_cast<double>(comparable);
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("auc: scores and labels differ in length");
  std::size_t pos = 0;
  for (int y : labels) pos += (y == 1);
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw Error("auc: labels contain a single class");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t)
      if (labels[order[t]] == 1) rank_sum += avg_rank;
    i = j + 1;
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

BinaryMetrics binary_metrics(std::span<const double> probabilities, std::span<const int> labels) {
  if (probabilities.size() != labels.size() || labels.empty())
    throw Error("binary_metrics: need equal, nonzero numbers of scores and labels");
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int pred = probabilities[i] >= 0.5 ? 1 : 0;
    correct += (pred == labels[i]);
    tp += (pred == 1 && labels[i] == 1);
    fp += (pred == 1 && labels[i] == 0);
    fn += (pred == 0 && labels[i] == 1);
  }
  BinaryMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  m.f1 = tp == 0 ? 0.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
  const bool both = std::any_of(labels.begin(), labels.end(), [](int y) { return y == 1; }) &&
                    std::any_of(labels.begin(), labels.end(), [](int y) { return y != 1; });
  if (both) m.auc = auc(probabilities, labels);
  return m;
}

}  // namespace jigsaw
