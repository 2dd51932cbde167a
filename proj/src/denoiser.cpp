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

#include "mdmp/denoiser.hpp"

#include "mdmp/errors.hpp"

#include <cmath>

namespace mdmp {

using Eigen::Index;

std::string to_string(EncoderKind kind) { return kind == EncoderKind::kGcn ? "gcn" : "linear"; }

EncoderKind encoder_from_string(const std::string& name) {
  if (name == "gcn") return EncoderKind::kGcn;
  if (name == "linear") return EncoderKind::kLinear;
  throw InvalidArgument("unknown encoder '" + name + "' (expected gcn or linear)");
}

DenoiserConfig DenoiserConfig::full_size(int features, bool learn_variance) {
  DenoiserConfig c;
  c.features = features;
  c.learn_variance = learn_variance;
  c.latent_dim = learn_variance ? 1024 : 512;
  c.ff_dim = 1024;
  return c;
}

void DenoiserConfig::validate() const {
  MDMP_CHECK_ARG(features > 0, "denoiser: features must be positive");
  MDMP_CHECK_ARG(latent_dim > 0 && latent_dim % 2 == 0, "denoiser: latent_dim must be positive and even");
  MDMP_CHECK_ARG(heads > 0 && latent_dim % heads == 0, "denoiser: latent_dim must be divisible by heads");
  MDMP_CHECK_ARG(layers >= 0 && ff_dim > 0 && text_dim > 0, "denoiser: invalid layer sizes");
  MDMP_CHECK_ARG(dropout >= 0.0 && dropout < 1.0, "denoiser: dropout must be in [0, 1)");
  MDMP_CHECK_ARG(encoder == EncoderKind::kLinear || (gcn_layers >= 1 && gcn_hidden >= 1),
                 "denoiser: graph encoder needs at least one layer");
}

Matrix gcn_layer_forward(const Matrix& h_in, const GcnLayerParams& layer) {
  MDMP_CHECK_ARG(layer.adjacency.rows() == layer.adjacency.cols(), "gcn: adjacency must be square");
  MDMP_CHECK_ARG(h_in.rows() == layer.adjacency.rows(), "gcn: H_in row count must equal K");
  MDMP_CHECK_ARG(h_in.cols() == layer.weights.rows(), "gcn: H_in column count must equal F_in");
  return layer.adjacency * h_in * layer.weights;
}

Matrix sinusoidal_embedding(int positions, int dim) {
  MDMP_CHECK_ARG(dim > 0 && dim % 2 == 0, "sinusoidal embedding needs an even dimension");
  Matrix pe(positions, dim);
  for (int p = 0; p < positions; ++p) {
    for (int i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * i / dim);
      pe(p, 2 * i) = std::sin(p * freq);
      pe(p, 2 * i + 1) = std::cos(p * freq);
    }
  }
  return pe;
}

RowVector timestep_embedding(int t, int dim) {
  MDMP_CHECK_ARG(dim > 0 && dim % 2 == 0, "timestep embedding needs an even dimension");
  RowVector e(dim);
  for (int i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / dim);
    e(2 * i) = std::sin(t * freq);
    e(2 * i + 1) = std::cos(t * freq);
  }
  return e;
}

// --- construction -----------------------------------------------------------

Denoiser::Denoiser(DenoiserConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng init(derive_seed(seed, {0x1417}));
  register_parameters(&init);
}

Denoiser::Denoiser(DenoiserConfig config, ad::ParameterSet params) : config_(config), params_(std::move(params)) {
  config_.validate();
  register_parameters(nullptr);
}

int Denoiser::param(const std::string& name, Index rows, Index cols, Rng* init, double lo, double hi) {
  ++registered_;
  if (init != nullptr) {
    Matrix v = (lo == hi) ? Matrix::Constant(rows, cols, lo) : init->uniform_matrix(rows, cols, lo, hi);
    return params_.add(name, std::move(v));
  }
  const int idx = params_.find(name);
  if (idx < 0) throw FormatError("checkpoint is missing parameter " + name);
  const Matrix& v = params_.value(idx);
  if (v.rows() != rows || v.cols() != cols) {
    throw FormatError("parameter " + name + " has shape " + std::to_string(v.rows()) + "x" +
                      std::to_string(v.cols()) + ", expected " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
  return idx;
}

int Denoiser::param_identity_noise(const std::string& name, Index n, Rng* init) {
  const int idx = param(name, n, n, init, -1e-3, 1e-3);
  if (init != nullptr) params_.value(idx) += Matrix::Identity(n, n);
  return idx;
}

Denoiser::Linear Denoiser::linear(const std::string& name, Index in, Index out, bool bias, Rng* init,
                                  double bias_init) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = param(name + ".weight", in, out, init, -bound, bound);
  if (bias) l.bias = param(name + ".bias", 1, out, init, bias_init, bias_init);
  return l;
}

void Denoiser::register_parameters(Rng* init) {
  const Index K = config_.features;
  const Index d = config_.latent_dim;
  if (config_.encoder == EncoderKind::kGcn) {
    Index fin = 1;
    for (int l = 0; l < config_.gcn_layers; ++l) {
      const std::string prefix = "encoder.gcn" + std::to_string(l);
      const int a = param_identity_noise(prefix + ".adjacency", K, init);
      const double bound = 1.0 / std::sqrt(static_cast<double>(fin));
      const int w = param(prefix + ".weights", fin, config_.gcn_hidden, init, -bound, bound);
      gcn_.emplace_back(a, w);
      fin = config_.gcn_hidden;
    }
    input_proj_ = linear("encoder.proj", K * config_.gcn_hidden, d, true, init);
  } else {
    input_proj_ = linear("encoder.proj", K, d, true, init);
  }
  time1_ = linear("time_embed.fc1", d, d, true, init);
  time2_ = linear("time_embed.fc2", d, d, true, init);
  // No bias: a masked (zero) text vector must contribute exactly nothing.
  text_proj_ = linear("text_embed.proj", config_.text_dim, d, false, init);
  for (int l = 0; l < config_.layers; ++l) {
    const std::string prefix = "backbone." + std::to_string(l);
    Block b;
    b.qkv = linear(prefix + ".attn.qkv", d, 3 * d, true, init);
    b.out = linear(prefix + ".attn.out", d, d, true, init);
    b.ln1_gamma = param(prefix + ".ln1.gamma", 1, d, init, 1.0, 1.0);
    b.ln1_beta = param(prefix + ".ln1.beta", 1, d, init, 0.0, 0.0);
    b.ff1 = linear(prefix + ".ff1", d, config_.ff_dim, true, init);
    b.ff2 = linear(prefix + ".ff2", config_.ff_dim, d, true, init);
    b.ln2_gamma = param(prefix + ".ln2.gamma", 1, d, init, 1.0, 1.0);
    b.ln2_beta = param(prefix + ".ln2.beta", 1, d, init, 0.0, 0.0);
    blocks_.push_back(b);
  }
  const Index D = config_.features;
  if (config_.learn_variance) {
    out_x0_ = linear("decoder.x0", d / 2, D, true, init);
    // Start the interpolation logits mid-range so the clamp is inactive.
    out_v0_ = linear("decoder.v0", d / 2, D, true, init, 0.5);
  } else {
    out_x0_ = linear("decoder.x0", d, D, true, init);
  }
  if (init == nullptr && params_.size() != registered_) {
    throw FormatError("checkpoint holds " + std::to_string(params_.size()) + " parameters, model defines " +
                      std::to_string(registered_));
  }
}

// --- forward ----------------------------------------------------------------

Matrix Denoiser::encoder_input(const Matrix& x_t, const Conditioning& cond) const {
  MDMP_CHECK_ARG(x_t.cols() == config_.features, "denoiser: input has " + std::to_string(x_t.cols()) +
                                                     " features, model expects " +
                                                     std::to_string(config_.features));
  MDMP_CHECK_ARG(cond.prefix_len() < x_t.rows(), "denoiser: prefix length must be smaller than the frame count");
  MDMP_CHECK_ARG(cond.prefix_len() == 0 || cond.prefix.cols() == x_t.cols(), "denoiser: prefix width mismatch");
  Matrix x = x_t;
  if (cond.prefix_len() > 0) x.topRows(cond.prefix_len()) = cond.prefix;
  return x;
}

DenoiserOutput Denoiser::forward(const Matrix& x_t, int t, const Conditioning& cond) const {
  ad::Tape tape(false);
  const DenoiserGraph g = build(tape, x_t, t, cond, nullptr);
  DenoiserOutput out;
  out.x0_hat = g.x0_hat.value();
  if (g.has_variance()) out.v0 = g.v0.value();
  return out;
}

DenoiserGraph Denoiser::build(ad::Tape& tape, const Matrix& x_t, int t, const Conditioning& cond,
                              Rng* dropout_rng) const {
  MDMP_CHECK_ARG(t >= 0, "denoiser: negative step index");
  const Matrix x = encoder_input(x_t, cond);
  const Index N = x.rows();
  const Index d = config_.latent_dim;
  const double p_drop = dropout_rng != nullptr ? config_.dropout : 0.0;

  std::vector<ad::Var> bound(static_cast<size_t>(params_.size()));
  auto P = [&](int idx) {
    auto& v = bound[static_cast<size_t>(idx)];
    if (v.tape == nullptr) v = tape.parameter(params_, idx);
    return v;
  };
  auto apply = [&](const Linear& l, ad::Var in) {
    ad::Var y = ad::matmul(in, P(l.weight));
    return l.bias >= 0 ? ad::add_row(y, P(l.bias)) : y;
  };
  auto drop = [&](ad::Var v) { return p_drop > 0.0 ? ad::dropout(v, p_drop, *dropout_rng) : v; };

  // Per-frame graph encoder: each feature channel is a node carrying its scalar.
  ad::Var h = tape.constant(x);
  if (config_.encoder == EncoderKind::kGcn) {
    for (size_t l = 0; l < gcn_.size(); ++l) {
      h = ad::graph_conv(h, P(gcn_[l].first), P(gcn_[l].second));
      if (l + 1 < gcn_.size()) h = ad::gelu(h);
    }
  }
  h = apply(input_proj_, h);

  ad::Var temb = apply(time2_, ad::gelu(apply(time1_, tape.constant(timestep_embedding(t, static_cast<int>(d))))));
  RowVector text = RowVector::Zero(config_.text_dim);
  if (!cond.text_masked) {
    MDMP_CHECK_ARG(cond.text.size() == config_.text_dim,
                   "denoiser: text embedding must have " + std::to_string(config_.text_dim) + " entries");
    text = cond.text.transpose();
  }
  ad::Var token = ad::add(temb, apply(text_proj_, tape.constant(text)));

  ad::Var seq = ad::concat_rows({token, h});
  seq = ad::add(seq, tape.constant(sinusoidal_embedding(static_cast<int>(N + 1), static_cast<int>(d))));

  const Index dh = d / config_.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const Block& b : blocks_) {
    // Pre-norm residual blocks.
    ad::Var qkv = apply(b.qkv, ad::layer_norm_rows(seq, P(b.ln1_gamma), P(b.ln1_beta)));
    std::vector<ad::Var> heads;
    heads.reserve(static_cast<size_t>(config_.heads));
    for (int hd = 0; hd < config_.heads; ++hd) {
      ad::Var q = ad::slice_cols(qkv, hd * dh, dh);
      ad::Var k = ad::slice_cols(qkv, d + hd * dh, dh);
      ad::Var v = ad::slice_cols(qkv, 2 * d + hd * dh, dh);
      ad::Var attn = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv_sqrt_dh));
      heads.push_back(ad::matmul(attn, v));
    }
    ad::Var attn_out = apply(b.out, ad::concat_cols(heads));
    seq = ad::add(seq, drop(attn_out));
    ad::Var ff = apply(b.ff2, drop(ad::gelu(apply(b.ff1, ad::layer_norm_rows(seq, P(b.ln2_gamma), P(b.ln2_beta))))));
    seq = ad::add(seq, drop(ff));
  }

  ad::Var frames = ad::slice_rows(seq, 1, N);
  DenoiserGraph g;
  if (config_.learn_variance) {
    g.x0_hat = apply(out_x0_, ad::slice_cols(frames, 0, d / 2));
    g.v0 = ad::clamp(apply(out_v0_, ad::slice_cols(frames, d / 2, d / 2)), 0.0, 1.0);
  } else {
    g.x0_hat = apply(out_x0_, frames);
  }
  return g;
}

}  // namespace mdmp
