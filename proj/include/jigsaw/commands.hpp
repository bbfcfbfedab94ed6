// SPDX-License-Identifier: Apache-2.0
//
// The work behind each CLI subcommand. Every command writes human-readable
// progress to `log` and returns a process exit status.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "jigsaw/config.hpp"
#include "jigsaw/verify.hpp"

namespace jigsaw {

struct Splits {
  std::vector<Bag> train;
  std::vector<Bag> test;
  std::vector<std::string> warnings;  // from the manifest
};

/// Loads the manifest named by cfg.run.data and picks the train/test splits
/// (train/test tags, or fold-k against the remaining folds). Fills
/// cfg.model.input_dim from the data when it is 0 and, for survival, assigns
/// time bins cut on the training split.
Splits load_splits(ResolvedConfig& cfg);

/// Cuts bins on the training records and assigns them to both splits.
BinEdges assign_survival_bins(std::vector<Bag>& train, std::vector<Bag>& test, std::size_t bins);

struct RunResult {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::map<std::string, double> metrics;
  std::filesystem::path dir;
};

struct MetricStats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run
};

struct SummaryRow {
  double lambda = 0.0;
  std::size_t runs = 0;
  std::map<std::string, MetricStats> metrics;
};

/// Groups runs by lambda, in first-seen order.
std::vector<SummaryRow> summarize(const std::vector<RunResult>& runs);
void write_summary(const std::vector<SummaryRow>& rows, const std::filesystem::path& txt,
                   const std::filesystem::path& csv);

/// Trains one model per (lambda, seed) pair on already loaded splits and
/// writes checkpoint.jmwt, report.jsonl, metrics.json and config.txt into
/// <out>/lambda-<l>/seed-<s>/.
std::vector<RunResult> run_train_eval(const ResolvedConfig& cfg, const Splits& splits, std::ostream& log);

/// Run directory of one (lambda, seed) pair.
std::filesystem::path run_dir(const std::filesystem::path& out, double lambda, std::uint64_t seed);

/// Rebuilds the model stored in a run directory.
Model load_run(const std::filesystem::path& dir, ResolvedConfig& cfg);

int command_synth(const ResolvedConfig& cfg, std::ostream& log);
int command_train(ResolvedConfig cfg, std::ostream& log);
/// Re-evaluates a run directory on its test split and compares the result
/// with the stored metrics.json bit for bit.
int command_eval(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& data, std::ostream& log);
int command_verify(const VerifyOptions& options, std::ostream& log);
int command_ot_check(std::size_t cases, std::ostream& log);
/// Demonstration tables, or one (X, P, Y) table read from a file.
int command_entropy_demo(const std::optional<std::filesystem::path>& table, std::ostream& log);
/// Writes cam.jsonl and cam.pgm for one bag; prints the localization AUC
/// when the bag carries instance labels of both kinds.
int command_cam(const std::filesystem::path& dir, const std::filesystem::path& bag_path,
                std::optional<std::size_t> class_index, const std::filesystem::path& out, std::ostream& log);

}  // namespace jigsaw
