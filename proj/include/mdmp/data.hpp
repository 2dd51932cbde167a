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

#include "mdmp/kinematics.hpp"
#include "mdmp/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mdmp {

inline constexpr std::uint32_t kContainerVersion = 1;

// Binary motion container: "MDMP", u32 version, u32 N, u32 D, f32 fps,
// u32 layout tag, then N*D little-endian float32 values, row-major.
void write_container(const std::string& path, const MotionTensor& motion);
MotionTensor read_container(const std::string& path);

std::vector<std::uint8_t> encode_container(const MotionTensor& motion);
MotionTensor decode_container(const std::vector<std::uint8_t>& bytes, const std::string& what = "container");

// Throws InvalidArgument when a non-raw layout disagrees with the width.
void check_layout_width(Layout layout, Eigen::Index width);

// Rounds every entry to the nearest float32, the precision containers store.
Matrix round_to_float(const Matrix& m);

struct DatasetRecord {
  std::string id;
  MotionTensor motion;
  std::vector<std::string> prompts;  // at least one
};

struct PrefixSplit {
  Matrix prefix;  // frames [0, n)
  Matrix target;  // the full sequence
};

PrefixSplit split_prefix(const MotionTensor& seq, int n);

// Keeps records strictly longer than min_seconds.
std::vector<DatasetRecord> filter_min_duration(std::vector<DatasetRecord> records, double min_seconds);

// Manifest JSON {"records": [{"id", "motion_path", "prompts"}]}. Motion paths
// are resolved relative to the manifest's directory.
std::vector<DatasetRecord> read_manifest(const std::string& path);

// Writes every record's container under <dir>/motions and <dir>/manifest.json.
void write_manifest(const std::string& dir, const std::vector<DatasetRecord>& records);

// --- toy generator ----------------------------------------------------------

enum class ToyAction { kCircleClockwise, kCircleCounterclockwise, kRaiseRightHand, kWalkForward };

struct ToyClass {
  std::string prompt;
  ToyAction action = ToyAction::kCircleClockwise;
};

std::vector<ToyClass> default_toy_classes();

struct ToyGenConfig {
  int num_sequences = 512;
  int frames = 120;
  double fps = 20.0;
  int prefix_len = 50;
  JointTree tree = JointTree::toy_skeleton();
  std::vector<ToyClass> classes = default_toy_classes();
  std::uint64_t seed = 0;
  std::string id_prefix = "toy";
  int shoulder_joint = 3;  // the joint whose local rotation lifts the hand

  void validate() const;
};

// Generating parameters of one toy sequence: the root trajectory and every
// non-root joint's local rotation per frame.
struct ToyMotion {
  DatasetRecord record;  // positions-3d layout
  int class_index = 0;
  std::vector<double> yaw;                     // per frame
  Matrix root_position;                        // N x 3
  std::vector<std::vector<Mat3>> local_rotations;  // per frame, J - 1 each
};

// Records are assigned to classes round-robin; sequence i draws from the
// stream derive_seed(seed, {i}).
std::vector<ToyMotion> generate_toy_motions(const ToyGenConfig& cfg);
std::vector<DatasetRecord> generate_toy_dataset(const ToyGenConfig& cfg);

// --- normalization ------------------------------------------------------------

// Per-feature affine map into model space: (x - mean) / std.
struct Normalizer {
  RowVector mean;
  RowVector std;

  static Normalizer fit(const std::vector<Matrix>& sequences);
  static Normalizer identity(Eigen::Index features);

  [[nodiscard]] Matrix normalize(const Matrix& x) const;
  [[nodiscard]] Matrix denormalize(const Matrix& z) const;
};

}  // namespace mdmp
