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

#include "mdmp/checkpoint.hpp"
#include "mdmp/data.hpp"
#include "mdmp/diffusion.hpp"
#include "mdmp/evaluation.hpp"
#include "mdmp/textcond.hpp"
#include "mdmp/uncertainty.hpp"

#include <atomic>
#include <optional>
#include <string>
#include <vector>

namespace mdmp {

// One experiment's configuration. Loaded from a JSON object whose keys are the
// member names below (model fields nest under "model"); unknown keys are
// rejected.
struct RunConfig {
  TrainConfig train;
  DenoiserConfig model;  // features is taken from the dataset
  std::string dataset;
  std::string checkpoint;
  std::string output_dir;
  std::string loss_csv;
  Layout layout = Layout::kPositions3d;
  std::string text_encoder = "stub";
  int chains = 8;
  UncertaintyKind index = UncertaintyKind::kModeDivergence;
  std::vector<int> presence_joints;  // empty: layout default
  double presence_scale = 1.0;
  int fluct_window = 20;
  bool no_text = false;
  bool no_motion = false;  // forces prefix_len = 0
  double min_duration_s = 0.0;
  std::uint64_t sample_seed = 0;

  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_file(const std::string& path);
  [[nodiscard]] std::string to_json_text() const;

  // Effective prefix length after the ablation flags.
  [[nodiscard]] int prefix_len() const { return no_motion ? 0 : train.prefix_len; }
  void validate() const;
};

// Joint attribution for a layout of the given width.
JointMap joint_map_for(Layout layout, Eigen::Index width);

// Default presence-zone joints: head and hand(s) of the skeleton in use.
std::vector<int> default_presence_joints(Layout layout, Eigen::Index width);

// Fits the normalizer, trains and returns the resulting checkpoint.
Checkpoint train_model(const RunConfig& cfg, const std::vector<DatasetRecord>& records, TrainResult* result = nullptr,
                       const TrainProgress& progress = {});

struct Prediction {
  std::vector<MotionTensor> samples;  // data space, prefix restored bitwise
  MotionTensor point;                 // mean over chains, prefix restored bitwise
  std::optional<UncertaintyGrid> mode;  // only with at least 2 chains
  UncertaintyGrid fluct;
  std::optional<UncertaintyGrid> variance;  // only with variance learning
};

struct PredictOptions {
  int chains = 8;
  double guidance_scale = 2.5;
  std::uint64_t seed = 0;
  int threads = 1;
  int fluct_window = 20;
  bool mask_text = false;
  int T = 0;  // 0: the checkpoint's T
};

// Samples the continuation of `observed` (at least prefix_len frames in data
// space; only the first prefix_len are used) for a prompt.
Prediction predict(const Checkpoint& ckpt, const Denoiser& model, const TextEmbedding& text, const Matrix& observed,
                   const PredictOptions& options, std::atomic<long>* forward_calls = nullptr);

// 3D joint positions of a sequence, via FK for the pose-feature layout.
MotionTensor to_positions(const MotionTensor& seq, const JointTree* tree);

std::string sample_file_name(int chain);

// Evaluation over aligned prediction and ground-truth sets.
struct EvalResult {
  MpjpeReport mpjpe;
  std::optional<SparsificationResult> sparsification;
};

struct EvalItem {
  MotionTensor prediction;  // point prediction
  MotionTensor truth;
  const UncertaintyGrid* uncertainty = nullptr;  // may be null
};

EvalResult evaluate(const std::vector<EvalItem>& items, int first_frame, bool with_sparsification,
                    const JointTree* tree, int sparsification_steps = 20);

}  // namespace mdmp
