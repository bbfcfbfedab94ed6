// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "jigsaw/data.hpp"
#include "jigsaw/metrics.hpp"

using namespace jigsaw;
namespace fs = std::filesystem;

namespace {

SynthConfig small(double delta) {
  SynthConfig c;
  c.dim = 4;
  c.delta = delta;
  return c;
}

// Largest area-normalized sum of feature 0 over rectangles with sides in the
// blob range: the matched-filter statistic for a single blob.
double scan_statistic(const Bag& b, const SynthConfig& cfg) {
  const std::size_t G = cfg.grid;
  double best = -1e300;
  for (std::size_t h = cfg.blob_min; h <= cfg.blob_max; ++h)
    for (std::size_t w = cfg.blob_min; w <= cfg.blob_max; ++w)
      for (std::size_t t = 0; t + h <= G; ++t)
        for (std::size_t l = 0; l + w <= G; ++l) {
          double s = 0.0;
          for (std::size_t r = t; r < t + h; ++r)
            for (std::size_t c = l; c < l + w; ++c) s += b.features[(r * G + c) * b.d];
          best = std::max(best, s / std::sqrt(static_cast<double>(h * w)));
        }
  return best;
}

// Threshold fitted on the first half, accuracy measured on the second.
double holdout_accuracy(const std::vector<Bag>& bags, const SynthConfig& cfg) {
  std::vector<double> s;
  for (const auto& b : bags) s.push_back(scan_statistic(b, cfg));
  const std::size_t half = bags.size() / 2;
  double best_t = 0.0, best_acc = -1.0;
  for (std::size_t k = 0; k < half; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < half; ++i) acc += (s[i] >= s[k]) == (bags[i].class_label() == 1);
    if (acc > best_acc) best_acc = acc, best_t = s[k];
  }
  double acc = 0.0;
  for (std::size_t i = half; i < bags.size(); ++i) acc += (s[i] >= best_t) == (bags[i].class_label() == 1);
  return acc / static_cast<double>(bags.size() - half);
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("jigsaw-data-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Bag random_bag(Pcg32& rng, bool survival) {
  SynthConfig c = small(1.0);
  c.grid = 1 + rng() % 5;
  c.blob_min = 1;
  c.blob_max = c.grid;
  c.dim = 1 + rng() % 6;
  Bag b = survival ? gen_survival_bag(c, rng) : gen_classification_bag(c, rng);
  if (rng() % 2) b.coords.clear();
  if (rng() % 2) b.instance_labels.clear();
  return b;
}

}  // namespace

TEST(Synth, MilRuleAndContiguousBlob) {
  const SynthConfig cfg = small(0.6);
  for (std::uint64_t i = 0; i < 300; ++i) {
    const Bag b = synth_bag(cfg, false, i);
    EXPECT_NO_THROW(b.validate());
    ASSERT_EQ(b.n, 144u);
    std::size_t r0 = 99, r1 = 0, c0 = 99, c1 = 0, count = 0;
    for (std::size_t k = 0; k < b.n; ++k)
      if (b.instance_labels[k]) {
        ++count;
        r0 = std::min<std::size_t>(r0, b.coords[k][0]), r1 = std::max<std::size_t>(r1, b.coords[k][0]);
        c0 = std::min<std::size_t>(c0, b.coords[k][1]), c1 = std::max<std::size_t>(c1, b.coords[k][1]);
      }
    if (b.class_label() == 0) {
      EXPECT_EQ(count, 0u);
      continue;
    }
    ASSERT_GE(count, 1u);
    // The bounding box is full exactly when the positives form one rectangle.
    EXPECT_EQ(count, (r1 - r0 + 1) * (c1 - c0 + 1));
    EXPECT_GE(r1 - r0 + 1, 2u);
    EXPECT_LE(r1 - r0 + 1, 4u);
    EXPECT_GE(c1 - c0 + 1, 2u);
    EXPECT_LE(c1 - c0 + 1, 4u);
  }
}

TEST(Synth, MeansSitOnFirstAxis) {
  SynthConfig cfg = small(2.0);
  double pos0 = 0, neg0 = 0, pos1 = 0;
  std::size_t np = 0, nn = 0;
  for (std::uint64_t i = 0; i < 200; ++i) {
    const Bag b = synth_bag(cfg, false, i);
    for (std::size_t k = 0; k < b.n; ++k)
      if (b.instance_labels[k]) pos0 += b.features[k * b.d], pos1 += b.features[k * b.d + 1], ++np;
      else neg0 += b.features[k * b.d], ++nn;
  }
  EXPECT_NEAR(pos0 / np, 2.0, 0.1);
  EXPECT_NEAR(pos1 / np, 0.0, 0.1);
  EXPECT_NEAR(neg0 / nn, 0.0, 0.02);
}

TEST(Synth, ZeroSeparationIsAtChance) {
  const SynthConfig cfg = small(0.0);
  const auto bags = synth_dataset(cfg, false, 0, 2000);
  const double acc = holdout_accuracy(bags, cfg);
  EXPECT_GT(acc, 0.45);
  EXPECT_LT(acc, 0.55);
  // The same detector has power once the classes separate.
  SynthConfig easy = small(2.0);
  EXPECT_GT(holdout_accuracy(synth_dataset(easy, false, 0, 400), easy), 0.9);
}

TEST(Synth, SurvivalSignal) {
  SynthConfig none = small(0.6);
  none.hazard_scale = 0.0;
  auto score = [](const std::vector<Bag>& bags) {
    std::vector<double> risk;
    std::vector<SurvivalRecord> rec;
    for (const auto& b : bags) risk.push_back(positive_fraction(b)), rec.push_back(b.survival());
    return c_index(risk, rec);
  };
  const double c0 = score(synth_dataset(none, true, 0, 2000));
  EXPECT_GT(c0, 0.45);
  EXPECT_LT(c0, 0.55);
  const double c4 = score(synth_dataset(small(0.6), true, 0, 2000));
  // The > 0.7 target lives in the acceptance suite; here only the direction.
  EXPECT_GT(c4, c0 + 0.01);
}

TEST(Synth, NoCensoringMeansAllEvents) {
  SynthConfig cfg = small(0.6);
  cfg.censoring_rate = 0.0;
  for (const auto& b : synth_dataset(cfg, true, 0, 200)) EXPECT_EQ(b.survival().event, 1);
  cfg.censoring_rate = 0.3;
  int censored = 0;
  for (const auto& b : synth_dataset(cfg, true, 0, 2000)) censored += b.survival().event == 0;
  EXPECT_NEAR(censored / 2000.0, 0.3, 0.04);
}

TEST(Synth, DeterministicPerIndex) {
  const SynthConfig cfg = small(0.6);
  const auto forward = synth_dataset(cfg, false, 0, 20);
  for (int i = 19; i >= 0; --i) EXPECT_TRUE(synth_bag(cfg, false, i) == forward[i]);
  EXPECT_TRUE(synth_dataset(cfg, false, 7, 3)[0] == forward[7]);
  SynthConfig other = cfg;
  other.seed = 1;
  EXPECT_FALSE(synth_bag(other, false, 0) == forward[0]);
}

TEST(Synth, InvalidConfigRejected) {
  SynthConfig c;
  c.blob_max = 13;
  EXPECT_THROW(c.validate(), Error);
  c = SynthConfig{};
  c.blob_min = 5;
  EXPECT_THROW(c.validate(), Error);
  c = SynthConfig{};
  c.delta = -0.1;
  Pcg32 rng(0);
  EXPECT_THROW(gen_classification_bag(c, rng), Error);
}

TEST(Milb, RoundTripIsBitExact) {
  Pcg32 rng(11);
  const auto dir = scratch("roundtrip");
  for (int t = 0; t < 100; ++t) {
    const Bag b = random_bag(rng, t % 2 == 1);
    EXPECT_TRUE(decode_bag(encode_bag(b)) == b);
    const auto p = dir / ("b" + std::to_string(t) + ".milb");
    write_bag(b, p);
    EXPECT_TRUE(read_bag(p) == b);
  }
}

TEST(Milb, MinimalLayout) {
  Bag b;
  b.n = 1;
  b.d = 2;
  b.features = {1.5f, -2.0f};
  b.label = std::uint32_t{0};
  const auto bytes = encode_bag(b);
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 4 + 4 + 8 + 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MILB");
  EXPECT_EQ(bytes[4], 1);   // version
  EXPECT_EQ(bytes[8], 0);   // flags
  EXPECT_EQ(bytes[12], 1);  // n
  EXPECT_EQ(bytes[16], 2);  // d
  // 1.5f = 0x3fc00000, little-endian
  EXPECT_EQ(bytes[22], 0xc0);
  EXPECT_EQ(bytes[23], 0x3f);
}

TEST(Milb, CorruptionRejectedWithOffset) {
  Pcg32 rng(12);
  const auto good = encode_bag(random_bag(rng, false));
  auto bad = good;
  bad[0] = 'X';
  try {
    decode_bag(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos) << e.what();
  }
  bad = good;
  bad[4] = 2;
  try {
    decode_bag(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("offset 4"), std::string::npos) << e.what();
  }
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, good.size() - 1}) {
    auto trunc = std::vector<std::uint8_t>(good.begin(), good.begin() + static_cast<long>(cut));
    try {
      decode_bag(trunc);
      FAIL();
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
    }
  }
  auto longer = good;
  longer.push_back(0);
  EXPECT_THROW(decode_bag(longer), Error);
}

TEST(Manifest, EmptyGivesWarning) {
  const auto dir = scratch("empty");
  std::ofstream(dir / "m.txt") << "# nothing here\n\n";
  const auto m = load_manifest(dir / "m.txt");
  EXPECT_TRUE(m.splits.empty());
  ASSERT_EQ(m.warnings.size(), 1u);
}

TEST(Manifest, DuplicatesAndFolds) {
  const auto dir = scratch("folds");
  const SynthConfig cfg = small(0.6);
  std::ofstream out(dir / "m.txt");
  for (int i = 0; i < 8; ++i) {
    const auto name = "b" + std::to_string(i) + ".milb";
    write_bag(synth_bag(cfg, false, i), dir / name);
    out << name << " fold-" << i % 4 << "\n";
  }
  out << "./b3.milb fold-3  # repeated\n";
  out.close();
  const auto m = load_manifest(dir / "m.txt");
  ASSERT_EQ(m.splits.size(), 4u);
  for (int k = 0; k < 4; ++k) {
    const auto& paths = m.splits.at("fold-" + std::to_string(k));
    ASSERT_EQ(paths.size(), 2u);
    EXPECT_EQ(paths[0].filename(), "b" + std::to_string(k) + ".milb");
    EXPECT_EQ(paths[1].filename(), "b" + std::to_string(k + 4) + ".milb");
  }
  ASSERT_EQ(m.warnings.size(), 1u);
  EXPECT_NE(m.warnings[0].find("line 9"), std::string::npos);
  const auto data = load_dataset(m);
  EXPECT_TRUE(data.at("fold-1")[1] == synth_bag(cfg, false, 5));
}

TEST(Manifest, ParseErrorNamesLine) {
  const auto dir = scratch("parse");
  write_bag(synth_bag(small(0.6), false, 0), dir / "a.milb");
  std::ofstream(dir / "m.txt") << "a.milb train\na.milb validation\n";
  try {
    load_manifest(dir / "m.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("m.txt:2"), std::string::npos) << e.what();
  }
}

TEST(Manifest, MissingFilesReportedTogether) {
  const auto dir = scratch("missing");
  std::ofstream(dir / "m.txt") << "x.milb train\ny.milb test\n";
  try {
    load_manifest(dir / "m.txt");
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2 missing"), std::string::npos) << msg;
    EXPECT_NE(msg.find("x.milb"), std::string::npos);
    EXPECT_NE(msg.find("y.milb"), std::string::npos);
  }
}
