// Copyright 2026 The MDMP Authors.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "mdmp/tensor.hpp"

#include <string>
#include <vector>

namespace mdmp {

enum class UncertaintyKind { kModeDivergence, kDenoisingFluctuations, kPredictedVariance };

std::string to_string(UncertaintyKind kind);
// Accepts "mode", "fluct", "var" and the long names.
UncertaintyKind uncertainty_from_string(const std::string& name);

// Feature index -> joint id (-1 = not attributed to any joint).
struct JointMap {
  std::vector<int> feature_joint;
  int joints = 0;

  static JointMap from_features(std::vector<int> feature_joint);
};

struct UncertaintyGrid {
  Matrix values;  // N x J, nonnegative
  UncertaintyKind kind = UncertaintyKind::kModeDivergence;
};

// Population std across samples per feature, then averaged per joint.
UncertaintyGrid mode_divergence(const std::vector<Matrix>& samples, const JointMap& map);

// Population std of the last `window` x0 snapshots per feature, then averaged per joint.
UncertaintyGrid denoising_fluctuations(const std::vector<Matrix>& snapshots, const JointMap& map, int window = 20);

// Per-joint mean of the final-step variance. Throws UnsupportedConfiguration
// when the variance is empty.
UncertaintyGrid predicted_variance(const Matrix& final_variance, const JointMap& map);

// Averages each joint's feature columns.
Matrix aggregate_by_joint(const Matrix& per_feature, const JointMap& map);

struct PresenceZone {
  int joint = 0;
  Matrix centers;        // N x 3
  std::vector<double> radii;  // per frame, meters
};

// positions is an N x (3J) global-position sequence.
std::vector<PresenceZone> presence_zones(const Matrix& positions, const UncertaintyGrid& grid,
                                         const std::vector<int>& joints, double scale = 1.0);

void write_grid_csv(const std::string& path, const UncertaintyGrid& grid);
UncertaintyGrid read_grid_csv(const std::string& path, UncertaintyKind kind);
void write_presence_csv(const std::string& path, const std::vector<PresenceZone>& zones);

}  // namespace mdmp
