// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "gen.hpp"
#include "jigsaw/interpret.hpp"
#include "jigsaw/nets.hpp"

using namespace jigsaw;
using ad::Tensor;
namespace fs = std::filesystem;

TEST(Cam, ZeroWeightsGiveZeroMap) {
  Pcg32 rng(1);
  const auto r = cam(gen::constant({9, 4}, rng), Tensor::zeros({4, 2}), 1);
  for (double v : r.slot_scores) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(r.grid_side, 3u);
  EXPECT_EQ(r.instances, 9u);
}

TEST(Cam, SingleSlotIsTheDotProduct) {
  const auto f = Tensor::constant({1, 3}, {1.0, -2.0, 0.5});
  const auto w = Tensor::constant({3, 2}, {1, 10, 2, 20, 3, 30});
  EXPECT_EQ(cam(f, w, 0).slot_scores[0], 1.0 - 4.0 + 1.5);
  EXPECT_EQ(cam(f, w, 1).slot_scores[0], 10.0 - 40.0 + 15.0);
}

TEST(Cam, MeanPlusBiasReconstructsLogits) {
  Pcg32 rng(2);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t S = 1 + rng() % 20, E = 1 + rng() % 8, out = 1 + rng() % 4;
    HeadParams h{gen::constant({E, out}, rng), gen::constant({out}, rng)};
    const auto f = gen::constant({S, E}, rng, -3, 3);
    const auto logits = classify(h, f);
    for (std::size_t c = 0; c < out; ++c) {
      const auto r = cam(f, h.w, c);
      const double m = std::accumulate(r.slot_scores.begin(), r.slot_scores.end(), 0.0) / static_cast<double>(S);
      worst = std::max(worst, std::abs(m + h.b.at(c) - logits.at(c)));
    }
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Cam, ReconstructsTrainedModelPrediction) {
  for (auto variant : {Variant::transformer, Variant::cnn}) {
    ModelConfig mc;
    mc.variant = variant;
    mc.input_dim = 5;
    mc.embed_dim = 8;
    mc.blocks = 1;
    Model model(mc);
    Pcg32 rng(3);
    const auto x = gen::constant({7, 5}, rng);
    const auto f = model.forward_backbone(x);
    const auto r = cam(f, model.head().w, 0, 7);
    EXPECT_EQ(r.slot_scores.size(), 9u);
    const double m = std::accumulate(r.slot_scores.begin(), r.slot_scores.end(), 0.0) / 9.0;
    EXPECT_NEAR(m + model.head().b.at(0), model.predict(x)[0], 1e-10);
    EXPECT_EQ(r.instance_scores().size(), 7u);
  }
}

TEST(Cam, LinearInFeatures) {
  Pcg32 rng(4);
  const auto w = gen::constant({4, 2}, rng);
  const auto a = gen::constant({6, 4}, rng), b = gen::constant({6, 4}, rng);
  std::vector<double> mix(24);
  for (std::size_t i = 0; i < 24; ++i) mix[i] = 2.0 * a.at(i) - 0.5 * b.at(i);
  const auto ra = cam(a, w, 1), rb = cam(b, w, 1), rm = cam(Tensor::constant({6, 4}, mix), w, 1);
  for (std::size_t i = 0; i < 6; ++i)
    EXPECT_NEAR(rm.slot_scores[i], 2.0 * ra.slot_scores[i] - 0.5 * rb.slot_scores[i], 1e-12);
}

TEST(Cam, RejectsBadArguments) {
  Pcg32 rng(5);
  const auto f = gen::constant({4, 3}, rng);
  EXPECT_THROW(cam(f, Tensor::zeros({3, 2}), 2), Error);
  EXPECT_THROW(cam(f, Tensor::zeros({4, 2}), 0), ShapeError);
  EXPECT_THROW(cam(f, Tensor::zeros({3, 2}), 0, 5), Error);
}

TEST(Cam, LocalizationAuc) {
  CamResult r;
  r.slot_scores = {0.9, 0.1, 0.8, 0.2, 0.0};
  r.instances = 4;
  EXPECT_EQ(cam_localization_auc(r, {1, 0, 1, 0}), 1.0);
  r.slot_scores = {0.3, 0.3, 0.3, 0.3};
  EXPECT_EQ(cam_localization_auc(r, {1, 0, 0, 1}), 0.5);
  EXPECT_THROW(cam_localization_auc(r, {0, 0, 0, 0}), Error);
  EXPECT_THROW(cam_localization_auc(r, {0, 1}), Error);
}

TEST(Cam, WritesJsonlAndPgm) {
  const auto dir = fs::temp_directory_path() / "jigsaw-cam";
  fs::remove_all(dir);
  fs::create_directories(dir);
  CamResult r;
  r.slot_scores = {0.0, 1.0, 0.5, 0.25};
  r.instances = 3;
  const std::vector<std::array<std::uint32_t, 2>> coords{{0, 0}, {0, 1}, {1, 0}};
  write_cam_jsonl(r, coords, dir / "cam.jsonl");
  std::ifstream in(dir / "cam.jsonl");
  std::string line;
  std::vector<nlohmann::json> rows;
  while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2]["coord"][0], 1);
  EXPECT_EQ(rows[1]["score"], 1.0);

  write_cam_pgm(r, coords, dir / "cam.pgm");
  std::ifstream pgm(dir / "cam.pgm", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(pgm)), {});
  const std::string header = "P5\n2 2\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 4);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 0]), 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 1]), 255);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 2]), 128);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 3]), 0);  // no instance there
}
