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

#include "mdmp/autodiff.hpp"
#include "mdmp/data.hpp"
#include "mdmp/denoiser.hpp"
#include "mdmp/diffusion.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mdmp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything needed to sample from a trained model.
struct Checkpoint {
  DenoiserConfig model;
  TrainConfig train;
  int frames = 0;  // sequence length N the model was trained on
  double fps = 20.0;
  Layout layout = Layout::kRaw;
  std::string text_encoder = "stub";
  Normalizer normalizer;
  ad::ParameterSet params;
};

// "MDMPCKPT", u32 version, u32 header length, JSON header (config plus the
// ordered tensor names and shapes), then every tensor as little-endian
// float32, row-major, in header order. Parameters are stored at float32
// precision, so loading yields the float-rounded values.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& what = "checkpoint");

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mdmp
