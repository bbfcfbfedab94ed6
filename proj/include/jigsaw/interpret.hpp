// SPDX-License-Identifier: Apache-2.0
//
// Class activation maps for the global-average-pooling head.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "jigsaw/tensor.hpp"

namespace jigsaw {

struct CamResult {
  std::vector<double> slot_scores;  // one per feature row (m*m for grid variants)
  std::size_t instances = 0;        // leading slots that hold real instances
  std::size_t grid_side = 0;        // m, or 0 when the features are not a grid
  std::size_t class_index = 0;

  std::vector<double> instance_scores() const {
    return {slot_scores.begin(), slot_scores.begin() + static_cast<std::ptrdiff_t>(instances)};
  }
};

/// CAM_i = sum_l W[l, c] F[i, l] for every row of F [S, E]; W is [E, out].
/// `instances` marks how many leading rows are real (defaults to all).
CamResult cam(const ad::Tensor& features, const ad::Tensor& head_weights, std::size_t class_index,
              std::size_t instances = 0);

/// AUC of the real-instance scores against the instance labels.
double cam_localization_auc(const CamResult& result, const std::vector<std::uint8_t>& instance_labels);

/// One JSON object per instance: index, grid coordinate (when given), score.
void write_cam_jsonl(const CamResult& result, const std::vector<std::array<std::uint32_t, 2>>& coords,
                     const std::filesystem::path& path);
/// 8-bit binary PGM of the scores placed at their coordinates, min-max scaled.
void write_cam_pgm(const CamResult& result, const std::vector<std::array<std::uint32_t, 2>>& coords,
                   const std::filesystem::path& path);

}  // namespace jigsaw
