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

#include <Eigen/Core>

#include <cstdint>
#include <string>

namespace mdmp {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

// Feature layout tag stored in motion containers.
enum class Layout : std::uint32_t {
  kRaw = 0,
  kHumanMl263 = 1,
  kPositions3d = 2,
};

std::string to_string(Layout layout);
Layout layout_from_string(const std::string& name);

// An N-frame x D-feature sequence. Row i is frame i.
struct MotionTensor {
  Matrix data;
  double fps = 20.0;
  Layout layout = Layout::kRaw;

  MotionTensor() = default;
  MotionTensor(Matrix d, double frame_rate, Layout l) : data(std::move(d)), fps(frame_rate), layout(l) {}

  [[nodiscard]] Eigen::Index frames() const { return data.rows(); }
  [[nodiscard]] Eigen::Index features() const { return data.cols(); }
  [[nodiscard]] double duration_seconds() const { return fps > 0 ? static_cast<double>(frames()) / fps : 0.0; }
};

}  // namespace mdmp
