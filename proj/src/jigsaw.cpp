// SPDX-License-Identifier: Apache-2.0

#include "jigsaw/jigsaw.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "jigsaw/ops.hpp"

namespace jigsaw {

using ad::Tensor;

Tensor equivalence_loss(const Tensor& f_unshuffled, const Tensor& f_shuffled, const Permutation& perm) {
  if (f_unshuffled.shape() != f_shuffled.shape())
    throw ShapeError("equivalence_loss: feature maps differ in shape: " + ad::to_string(f_unshuffled.shape()) +
                     " vs " + ad::to_string(f_shuffled.shape()));
  const auto slots = f_unshuffled.dim(0);
  return ad::scale(ad::squared_norm(f_shuffled - apply(perm, f_unshuffled)), 1.0 / (2.0 * static_cast<double>(slots)));
}

Tensor final_loss(const Tensor& task, const Tensor& eqv, double lambda) {
  if (!(lambda >= 0.0)) throw Error("final_loss: lambda must satisfy lambda >= 0, got " + std::to_string(lambda));
  return task + ad::scale(eqv, lambda);
}

Tensor task_loss(HeadKind head, const Tensor& logits, const Bag& bag, double survival_alpha) {
  switch (head) {
    case HeadKind::binary: return bce_loss(logits, static_cast<int>(bag.class_label()));
    case HeadKind::multiclass: return cross_entropy_loss(logits, bag.class_label());
    case HeadKind::survival: {
      const auto& rec = bag.survival();
      if (rec.bin < 0) throw Error("task_loss: survival bag has no bin index; assign time bins first");
      return survival_nll_loss(logits, rec.bin, rec.event, survival_alpha);
    }
  }
  throw Error("task_loss: unknown head");
}

// ---------------------------------------------------------------- optimizer

OptimizerState::OptimizerState(const ParamSet& params, AdamWConfig config) : config_(config) {
  for (const auto& [_, t] : params.entries()) {
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

void adamw_update(OptimizerState& s, ParamSet& params, const std::vector<std::vector<double>>& grads) {
  if (grads.size() != params.size() || s.m_.size() != params.size())
    throw ShapeError("adamw_update: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = params.entries()[i];
    if (!grads[i].empty() && grads[i].size() != t.size())
      throw ShapeError("adamw_update: gradient for " + name + " has " + std::to_string(grads[i].size()) +
                       " entries, parameter has " + std::to_string(t.size()));
    if (s.m_[i].size() != t.size()) throw ShapeError("adamw_update: optimizer state does not match " + name);
  }
  const auto& c = s.config_;
  ++s.step_;
  const double t = static_cast<double>(s.step_);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const double decay = 1.0 - c.lr * c.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto tensor = params.entries()[i].second;
    auto p = tensor.mutable_values();
    auto& m = s.m_[i];
    auto& v = s.v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = grads[i].empty() ? 0.0 : grads[i][k];
      p[k] *= decay;
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
      p[k] -= c.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + c.eps);
    }
  }
}

void adamw_update(OptimizerState& state, ParamSet& params) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& [_, t] : params.entries())
    grads.emplace_back(t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end()) : std::vector<double>{});
  adamw_update(state, params, grads);
}

// ---------------------------------------------------------------- steps

namespace {

std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

std::vector<std::size_t> range(std::size_t from, std::size_t to) {
  std::vector<std::size_t> r(to - from);
  std::iota(r.begin(), r.end(), from);
  return r;
}

}  // namespace

SiameseStepOutput siamese_step(Model& model, const Bag& bag, const Permutation& perm, OptimizerState& opt,
                               const StepOptions& options) {
  if (bag.n == 0) throw Error("siamese_step: empty bag");
  const auto& cfg = model.config();
  const auto sources = model.slot_sources(bag.n);
  const std::size_t S = sources.size(), d = bag.d, E = cfg.embed_dim;
  if (perm.size() != S)
    throw Error("siamese_step: permutation over " + std::to_string(perm.size()) + " slots, bag has " +
                std::to_string(S));
  std::vector<std::size_t> shuffled(S);
  for (std::size_t i = 0; i < S; ++i) shuffled[i] = sources[perm[i]];

  const auto x = bag.tensor();
  Tensor f_u, f_s, z_u, z_s;
  if (options.mode == BranchMode::stacked) {
    std::vector<std::size_t> both = sources;
    both.insert(both.end(), shuffled.begin(), shuffled.end());
    auto f = model.features(ad::reshape(ad::gather_rows(x, both), {2, S, d}));
    auto z = model.logits(f);
    auto flat = ad::reshape(f, {2 * S, E});
    const auto first = range(0, S), second = range(S, 2 * S);
    f_u = ad::gather_rows(flat, first);
    f_s = ad::gather_rows(flat, second);
    const std::size_t row0[] = {0}, row1[] = {1};
    z_u = ad::gather_rows(z, row0);
    z_s = ad::gather_rows(z, row1);
  } else {
    auto fu3 = model.features(ad::reshape(ad::gather_rows(x, sources), {1, S, d}));
    z_u = model.logits(fu3);
    auto fs3 = model.features(ad::reshape(ad::gather_rows(x, shuffled), {1, S, d}));
    z_s = model.logits(fs3);
    f_u = ad::reshape(fu3, {S, E});
    f_s = ad::reshape(fs3, {S, E});
  }

  auto eqv = equivalence_loss(f_u, f_s, perm);
  auto task = task_loss(cfg.head, z_u, bag, cfg.survival_alpha);
  if (options.task_on_shuffled) task = ad::scale(task + task_loss(cfg.head, z_s, bag, cfg.survival_alpha), 0.5);
  auto total = final_loss(task, eqv, cfg.lambda);

  SiameseStepOutput out;
  out.task_loss = task.item();
  out.equivalence_loss = eqv.item();
  out.total_loss = total.item();
  out.logits_unshuffled = values_of(z_u);
  out.logits_shuffled = values_of(z_s);

  model.params().zero_grad();
  ad::backward(total);
  if (!options.dry_run) adamw_update(opt, model.params());
  return out;
}

double single_branch_step(Model& model, const Bag& bag, OptimizerState& opt, bool dry_run) {
  if (bag.n == 0) throw Error("single_branch_step: empty bag");
  const auto sources = model.slot_sources(bag.n);
  auto f = model.features(ad::reshape(ad::gather_rows(bag.tensor(), sources), {1, sources.size(), bag.d}));
  auto loss = task_loss(model.config().head, model.logits(f), bag, model.config().survival_alpha);
  const double value = loss.item();
  model.params().zero_grad();
  ad::backward(loss);
  if (!dry_run) adamw_update(opt, model.params());
  return value;
}

// ---------------------------------------------------------------- training

void TrainReport::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& e : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["task_loss"] = e.task_loss;
    j["eqv_loss"] = e.eqv_loss;
    j["total_loss"] = e.total_loss;
    for (const auto& [k, v] : e.metrics) j[k] = v;
    out << j.dump() << '\n';
  }
}

TrainReport train(Model& model, const std::vector<Bag>& train_set, const std::vector<Bag>& eval_set,
                  const TrainOptions& options) {
  if (train_set.empty()) throw Error("train: empty training set");
  const auto seed = model.config().seed;
  OptimizerState opt(model.params(), model.config().optimizer);
  TrainReport report;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    Pcg32 order_rng = derive_stream(seed, epoch, std::numeric_limits<std::uint64_t>::max());
    const auto order = sample_permutation(train_set.size(), order_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto idx = order[k];
      const auto& bag = train_set[idx];
      Pcg32 perm_rng = derive_stream(seed, epoch, idx);
      const auto perm = sample_permutation(model.slot_count(bag.n), perm_rng);
      const auto step = siamese_step(model, bag, perm, opt, options.step);
      rec.task_loss += step.task_loss;
      rec.eqv_loss += step.equivalence_loss;
      rec.total_loss += step.total_loss;
    }
    const double count = static_cast<double>(train_set.size());
    rec.task_loss /= count;
    rec.eqv_loss /= count;
    rec.total_loss /= count;
    const bool eval_now = options.eval_every ? epoch % options.eval_every == 0 || epoch == options.epochs
                                             : epoch == options.epochs;
    if (eval_now && !eval_set.empty()) rec.metrics = evaluate(model, eval_set);
    if (options.on_epoch) options.on_epoch(rec);
    report.epochs.push_back(std::move(rec));
  }
  model.params().zero_grad();
  return report;
}

std::map<std::string, double> evaluate(const Model& model, const std::vector<Bag>& bags) {
  if (bags.empty()) throw Error("evaluate: empty evaluation set");
  const auto head = model.config().head;
  std::map<std::string, double> out;
  double loss = 0.0;
  if (head == HeadKind::survival) {
    std::vector<double> risks;
    std::vector<SurvivalRecord> records;
    bool have_bins = true;
    for (const auto& bag : bags) {
      const auto z = model.predict(bag.tensor());
      risks.push_back(risk_score(z));
      records.push_back(bag.survival());
      if (bag.survival().bin < 0) have_bins = false;
      else loss += survival_nll(z, bag.survival().bin, bag.survival().event, model.config().survival_alpha);
    }
    out["c_index"] = c_index(risks, records);
    if (have_bins) out["loss"] = loss / static_cast<double>(bags.size());
    return out;
  }
  if (head == HeadKind::multiclass) {
    std::size_t correct = 0;
    for (const auto& bag : bags) {
      const auto z = model.predict(bag.tensor());
      const auto pred = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
      correct += (pred == bag.class_label());
      const double mx = *std::max_element(z.begin(), z.end());
      double lse = 0.0;
      for (double v : z) lse += std::exp(v - mx);
      loss += mx + std::log(lse) - z[bag.class_label()];
    }
    out["accuracy"] = static_cast<double>(correct) / static_cast<double>(bags.size());
    out["loss"] = loss / static_cast<double>(bags.size());
    return out;
  }
  std::vector<double> probs;
  std::vector<int> labels;
  for (const auto& bag : bags) {
    const double z = model.predict(bag.tensor())[0];
    const int y = static_cast<int>(bag.class_label());
    probs.push_back(z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)));
    labels.push_back(y);
    loss += bce(z, y);
  }
  const auto m = binary_metrics(probs, labels);
  out["accuracy"] = m.accuracy;
  out["f1"] = m.f1;
  if (m.auc) out["auc"] = *m.auc;
  out["loss"] = loss / static_cast<double>(bags.size());
  return out;
}

}  // namespace jigsaw
