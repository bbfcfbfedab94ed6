// SPDX-License-Identifier: Apache-2.0
//
// Siamese training with the shuffling-equivalence regularizer.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "jigsaw/data.hpp"
#include "jigsaw/nets.hpp"
#include "jigsaw/permutation.hpp"

namespace jigsaw {

/// (1 / (2 S)) * || F_shuffled - apply(perm, F_unshuffled) ||_F^2 over S slots.
ad::Tensor equivalence_loss(const ad::Tensor& f_unshuffled, const ad::Tensor& f_shuffled, const Permutation& perm);
/// task + lambda * eqv; negative lambda is rejected.
ad::Tensor final_loss(const ad::Tensor& task, const ad::Tensor& eqv, double lambda);

/// Task loss for one bag from its logits, chosen by the head kind. Survival
/// bags must already carry a bin index.
ad::Tensor task_loss(HeadKind head, const ad::Tensor& logits, const Bag& bag, double survival_alpha = 0.0);

class OptimizerState {
 public:
  OptimizerState(const ParamSet& params, AdamWConfig config);

  const AdamWConfig& config() const { return config_; }
  std::uint64_t step() const { return step_; }
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }

 private:
  friend void adamw_update(OptimizerState&, ParamSet&, const std::vector<std::vector<double>>&);
  AdamWConfig config_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// One decoupled-weight-decay Adam step. grads[i] pairs with params entry i;
/// an empty vector means a zero gradient.
void adamw_update(OptimizerState& state, ParamSet& params, const std::vector<std::vector<double>>& grads);
/// Same, reading the gradients accumulated on the parameters.
void adamw_update(OptimizerState& state, ParamSet& params);

enum class BranchMode { stacked, sequential };

struct SiameseStepOutput {
  double task_loss = 0.0;
  double equivalence_loss = 0.0;
  double total_loss = 0.0;
  std::vector<double> logits_unshuffled;
  std::vector<double> logits_shuffled;
};

struct StepOptions {
  BranchMode mode = BranchMode::stacked;
  /// Averages the task loss over both branches instead of using the
  /// unshuffled branch alone.
  bool task_on_shuffled = false;
  /// Skips the optimizer update (gradients stay on the parameters).
  bool dry_run = false;
};

/// Pads the bag to the model's slot count, shuffles the slots with `perm`,
/// runs both branches with shared parameters, backpropagates the combined
/// loss once and applies one optimizer update.
SiameseStepOutput siamese_step(Model& model, const Bag& bag, const Permutation& perm, OptimizerState& opt,
                               const StepOptions& options = {});
/// Plain training step on the unshuffled branch only.
double single_branch_step(Model& model, const Bag& bag, OptimizerState& opt, bool dry_run = false);

struct EpochRecord {
  std::size_t epoch = 0;
  double task_loss = 0.0;
  double eqv_loss = 0.0;
  double total_loss = 0.0;
  std::map<std::string, double> metrics;  // held-out metrics, when evaluated
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  void write_jsonl(const std::filesystem::path& path) const;
};

struct TrainOptions {
  std::size_t epochs = 200;
  StepOptions step;
  /// Evaluate on the held-out set every k epochs (0: only after the last).
  std::size_t eval_every = 0;
  /// Called after each epoch; useful for progress output.
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Bag order and per-bag permutations derive from (config.seed, epoch, bag index).
TrainReport train(Model& model, const std::vector<Bag>& train_set, const std::vector<Bag>& eval_set,
                  const TrainOptions& options);

/// Held-out metrics: accuracy/f1/auc (binary), accuracy (multiclass) or
/// c_index (survival), plus the mean task loss.
std::map<std::string, double> evaluate(const Model& model, const std::vector<Bag>& bags);

}  // namespace jigsaw
