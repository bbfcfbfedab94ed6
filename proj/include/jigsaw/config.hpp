// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value run configuration. A file supplies defaults, flags
// override the file, and every key is validated.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "jigsaw/data.hpp"
#include "jigsaw/jigsaw.hpp"
#include "jigsaw/nets.hpp"

namespace jigsaw {

struct RunSettings {
  std::string task = "classification";  // classification | survival
  std::filesystem::path data;            // manifest
  std::filesystem::path out = "runs";
  std::size_t seeds = 1;
  std::vector<double> lambda_sweep;      // empty: single lambda
  std::optional<std::size_t> fold;       // train on other folds, test on fold-k
  std::size_t train_bags = 400;
  std::size_t test_bags = 200;
  bool quiet = false;
};

struct ResolvedConfig {
  ModelConfig model;
  SynthConfig synth;
  TrainOptions train;
  RunSettings run;
  /// Keys explicitly set by the file or flags, with their final values.
  std::map<std::string, std::string> explicit_keys;
};

/// (key, value) pairs from the command line, in order.
using FlagList = std::vector<std::pair<std::string, std::string>>;

/// Parses an optional config file and flag overrides into a validated
/// configuration. Errors name the key and its origin (file:line or --flag).
ResolvedConfig parse_config(const std::optional<std::filesystem::path>& file, const FlagList& flags);
/// Same, reading the file contents from a string (origin used in messages).
ResolvedConfig parse_config_text(const std::string& text, const std::string& origin, const FlagList& flags);

/// Every recognised key with its resolved value, one "key=value" per line.
std::string dump_config(const ResolvedConfig& cfg);
/// Recognised keys with one-line descriptions.
const std::vector<std::pair<std::string, std::string>>& config_keys();

}  // namespace jigsaw
