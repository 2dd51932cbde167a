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
#include "mdmp/rng.hpp"
#include "mdmp/tensor.hpp"

#include <cstdint>
#include <string>

namespace mdmp {

enum class EncoderKind { kGcn, kLinear };

std::string to_string(EncoderKind kind);
EncoderKind encoder_from_string(const std::string& name);

struct DenoiserConfig {
  int features = 263;  // D; also the node count K of the graph encoder
  int latent_dim = 1024;
  int layers = 8;
  int heads = 4;
  int ff_dim = 1024;
  double dropout = 0.1;
  bool learn_variance = true;
  EncoderKind encoder = EncoderKind::kGcn;
  int gcn_hidden = 8;
  int gcn_layers = 2;
  int text_dim = 512;

  // Full-size configuration: 512-wide latent, doubled to 1024 when the
  // variance channel is learned.
  static DenoiserConfig full_size(int features, bool learn_variance);

  void validate() const;
};

// One graph-convolution layer: H_out = A * H_in * W over K nodes.
struct GcnLayerParams {
  Matrix adjacency;  // K x K, dense
  Matrix weights;    // F_in x F_out
};

Matrix gcn_layer_forward(const Matrix& h_in, const GcnLayerParams& layer);

// Row p holds the interleaved sin/cos embedding of position p (base 10000).
Matrix sinusoidal_embedding(int positions, int dim);
RowVector timestep_embedding(int t, int dim);

struct Conditioning {
  Matrix prefix;        // n x D observed frames
  Vector text;          // text_dim entries; ignored when text_masked
  bool text_masked = false;

  [[nodiscard]] Eigen::Index prefix_len() const { return prefix.rows(); }
};

struct DenoiserOutput {
  Matrix x0_hat;  // N x D
  Matrix v0;      // N x D, empty when variance learning is off
};

struct DenoiserGraph {
  ad::Var x0_hat;
  ad::Var v0;  // id < 0 when variance learning is off

  [[nodiscard]] bool has_variance() const { return v0.id >= 0; }
};

// Graph-convolutional encoder, transformer-encoder backbone and split decoder.
// The noisy input's first n frames are replaced by the clean prefix; the
// timestep and text embeddings are summed into one conditioning token that
// precedes the frame tokens.
class Denoiser {
 public:
  Denoiser(DenoiserConfig config, std::uint64_t seed);
  // Adopts an existing parameter set (e.g. from a checkpoint). Every tensor
  // must be present with the shape the config implies.
  Denoiser(DenoiserConfig config, ad::ParameterSet params);

  [[nodiscard]] const DenoiserConfig& config() const { return config_; }
  [[nodiscard]] const ad::ParameterSet& params() const { return params_; }
  ad::ParameterSet& params() { return params_; }

  // Evaluation-mode pass (dropout off); deterministic.
  [[nodiscard]] DenoiserOutput forward(const Matrix& x_t, int t, const Conditioning& cond) const;

  // Records the pass on a tape. Dropout is applied when dropout_rng is set.
  DenoiserGraph build(ad::Tape& tape, const Matrix& x_t, int t, const Conditioning& cond, Rng* dropout_rng) const;

  // x_t with its first n frames overwritten by the prefix.
  [[nodiscard]] Matrix encoder_input(const Matrix& x_t, const Conditioning& cond) const;

 private:
  struct Linear {
    int weight = -1;
    int bias = -1;  // -1 for bias-free projections
  };
  struct Block {
    Linear qkv, out, ff1, ff2;
    int ln1_gamma = -1, ln1_beta = -1, ln2_gamma = -1, ln2_beta = -1;
  };
  // With init set, creates freshly initialized tensors; otherwise resolves
  // (and shape-checks) the tensors already present in params_.
  void register_parameters(Rng* init);
  int param(const std::string& name, Eigen::Index rows, Eigen::Index cols, Rng* init, double lo, double hi);
  int param_identity_noise(const std::string& name, Eigen::Index n, Rng* init);
  Linear linear(const std::string& name, Eigen::Index in, Eigen::Index out, bool bias, Rng* init, double bias_init = 0.0);

  DenoiserConfig config_;
  ad::ParameterSet params_;
  std::vector<std::pair<int, int>> gcn_;  // (adjacency, weights) per layer
  Linear input_proj_, time1_, time2_, text_proj_, out_x0_, out_v0_;
  std::vector<Block> blocks_;
  int registered_ = 0;
};

}  // namespace mdmp
