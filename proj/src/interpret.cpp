// SPDX-License-Identifier: Apache-2.0

#include "jigsaw/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "jigsaw/metrics.hpp"

namespace jigsaw {

CamResult cam(const ad::Tensor& features, const ad::Tensor& head_weights, std::size_t class_index,
              std::size_t instances) {
  if (features.rank() != 2) throw ShapeError("cam: expected features [S, E], got " + ad::to_string(features.shape()));
  if (head_weights.rank() != 2 || head_weights.dim(0) != features.dim(1))
    throw ShapeError("cam: head weights " + ad::to_string(head_weights.shape()) + " do not match features " +
                     ad::to_string(features.shape()));
  const std::size_t S = features.dim(0), E = features.dim(1), out = head_weights.dim(1);
  if (class_index >= out)
    throw Error("cam: class " + std::to_string(class_index) + " outside a head of width " + std::to_string(out));
  if (instances > S) throw Error("cam: more instances than feature rows");
  CamResult r;
  r.class_index = class_index;
  r.instances = instances == 0 ? S : instances;
  const auto m = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(S))));
  r.grid_side = m * m == S ? m : 0;
  r.slot_scores.assign(S, 0.0);
  const auto f = features.values();
  const auto w = head_weights.values();
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t l = 0; l < E; ++l) r.slot_scores[i] += w[l * out + class_index] * f[i * E + l];
  return r;
}

double cam_localization_auc(const CamResult& result, const std::vector<std::uint8_t>& instance_labels) {
  if (instance_labels.size() != result.instances)
    throw Error("cam_localization_auc: " + std::to_string(instance_labels.size()) + " labels for " +
                std::to_string(result.instances) + " instances");
  const auto scores = result.instance_scores();
  std::vector<int> labels(instance_labels.begin(), instance_labels.end());
  return auc(scores, labels);
}

void write_cam_jsonl(const CamResult& result, const std::vector<std::array<std::uint32_t, 2>>& coords,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t i = 0; i < result.instances; ++i) {
    nlohmann::ordered_json j;
    j["instance"] = i;
    if (i < coords.size()) j["coord"] = {coords[i][0], coords[i][1]};
    j["score"] = result.slot_scores[i];
    out << j.dump() << '\n';
  }
}

void write_cam_pgm(const CamResult& result, const std::vector<std::array<std::uint32_t, 2>>& coords,
                   const std::filesystem::path& path) {
  std::vector<std::array<std::uint32_t, 2>> where = coords;
  if (where.empty()) {
    // Without coordinates, lay instances out row-major on the smallest square.
    const auto side = static_cast<std::uint32_t>(std::ceil(std::sqrt(static_cast<double>(result.instances))));
    for (std::uint32_t i = 0; i < result.instances; ++i) where.push_back({i / side, i % side});
  }
  if (where.size() < result.instances) throw Error("cam: fewer coordinates than instances");
  std::uint32_t rows = 0, cols = 0;
  for (std::size_t i = 0; i < result.instances; ++i) {
    rows = std::max(rows, where[i][0] + 1);
    cols = std::max(cols, where[i][1] + 1);
  }
  const auto scores = result.instance_scores();
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it, span = *hi_it - *lo_it;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(rows) * cols, 0);
  for (std::size_t i = 0; i < result.instances; ++i) {
    const double t = span > 0.0 ? (scores[i] - lo) / span : 0.5;
    pixels[where[i][0] * cols + where[i][1]] = static_cast<std::uint8_t>(std::lround(255.0 * t));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "P5\n" << cols << ' ' << rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

}  // namespace jigsaw
