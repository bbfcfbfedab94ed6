// SPDX-License-Identifier: Apache-2.0
//
// Bags, the synthetic grid generator, the MILB bag file format and manifests.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "jigsaw/metrics.hpp"
#include "jigsaw/rng.hpp"
#include "jigsaw/tensor.hpp"

namespace jigsaw {

struct Bag {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<float> features;                     // n*d, row-major
  std::vector<std::array<std::uint32_t, 2>> coords;  // optional (row, col)
  std::vector<std::uint8_t> instance_labels;       // optional
  std::variant<std::uint32_t, SurvivalRecord> label = std::uint32_t{0};

  bool is_survival() const { return std::holds_alternative<SurvivalRecord>(label); }
  std::uint32_t class_label() const;
  const SurvivalRecord& survival() const;
  SurvivalRecord& survival();
  /// Throws Error when the bag breaks a structural invariant.
  void validate() const;
  /// [n, d] constant tensor.
  ad::Tensor tensor() const;
  friend bool operator==(const Bag&, const Bag&);
};

struct SynthConfig {
  std::size_t grid = 12;
  std::size_t dim = 64;
  double delta = 0.6;
  double noise = 1.0;
  std::size_t blob_min = 2;
  std::size_t blob_max = 4;
  double positive_fraction = 0.5;
  double hazard_scale = 4.0;
  double censoring_rate = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
  static SynthConfig hard() { return {}; }
  static SynthConfig easy() {
    SynthConfig c;
    c.delta = 2.0;
    return c;
  }
};

Bag gen_classification_bag(const SynthConfig& cfg, Pcg32& rng);
Bag gen_survival_bag(const SynthConfig& cfg, Pcg32& rng);

/// Bag `index` of a dataset; depends only on (cfg, index).
Bag synth_bag(const SynthConfig& cfg, bool survival, std::uint64_t index);
std::vector<Bag> synth_dataset(const SynthConfig& cfg, bool survival, std::uint64_t first,
                               std::size_t count);

/// Fraction of instances carrying a positive instance label.
double positive_fraction(const Bag& bag);

// ---- MILB files

std::vector<std::uint8_t> encode_bag(const Bag& bag);
Bag decode_bag(const std::vector<std::uint8_t>& bytes);
void write_bag(const Bag& bag, const std::filesystem::path& path);
Bag read_bag(const std::filesystem::path& path);

// ---- manifests

struct Manifest {
  std::map<std::string, std::vector<std::filesystem::path>> splits;
  std::vector<std::string> warnings;
};

/// Lines are "<path> <split>" with split in {train, test, fold-<k>}; '#' starts
/// a comment. Relative paths resolve against the manifest's directory.
Manifest load_manifest(const std::filesystem::path& path);
std::map<std::string, std::vector<Bag>> load_dataset(const Manifest& manifest);

}  // namespace jigsaw
