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
#include "mdmp/denoiser.hpp"
#include "mdmp/schedule.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mdmp {

struct TrainConfig {
  double lambda_vlb = 0.001;
  double guidance_scale = 2.5;
  double text_mask_prob = 0.1;
  int batch_size = 64;
  double learning_rate = 1e-4;
  int steps = 0;
  int T = 50;
  int prefix_len = 50;
  std::uint64_t seed = 0;
  double grad_clip_norm = 1.0;
  int threads = 1;

  void validate() const;
};

struct LossTerms {
  double simple = 0.0;
  double vlb = 0.0;
  double hybrid = 0.0;
};

// Mean squared error over all entries.
double loss_simple(const Matrix& x0, const Matrix& x0_hat);
double loss_hybrid(double simple, double vlb, double lambda_vlb);

// exp(v0 log beta_t + (1 - v0) log beta_tilde_t), with beta_tilde floored at
// 1e-20 where it vanishes (step index 0).
Matrix sigma_theta(const Matrix& v0, int t, const NoiseSchedule& sched);

// KL(N(mean_q, var_q) || N(mean_p, var_p)) for scalars.
double gaussian_kl(double mean_q, double var_q, double mean_p, double var_p);

// Per-datum variational bound term, summed over entries. For t >= 1 this is
// the KL between the forward posterior and the model step; for t = 0 it is the
// Gaussian negative log-likelihood of x0 under the model's final step.
double loss_vlb(const Matrix& x0, const Matrix& x_t, int t, const DenoiserOutput& out, const NoiseSchedule& sched);

// Tape form of loss_vlb. The model mean enters as a constant (stop-gradient),
// so only the variance logits receive gradient.
ad::Var loss_vlb_graph(ad::Var v0, const Matrix& x0_hat, const Matrix& x0, const Matrix& x_t, int t,
                       const NoiseSchedule& sched);

// L_T: KL(q(x_T | x0) || N(0, I)), summed. Monitoring only; has no parameters.
double prior_kl(const Matrix& x0, const NoiseSchedule& sched);

struct DiffusionExample {
  Matrix motion;              // N x D, model space
  std::vector<Vector> texts;  // one embedding per prompt; at least one
};

struct TrainResult {
  std::vector<LossTerms> history;
};

// Adam with global-norm clipping.
class AdamOptimizer {
 public:
  AdamOptimizer(const ad::ParameterSet& params, double learning_rate, double clip_norm);
  // Returns the pre-clip global gradient norm.
  double step(ad::ParameterSet& params, ad::GradientSet& grads);

 private:
  double lr_;
  double clip_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

// Random choices behind one sample of a training batch, drawn from the
// stream derive_seed(seed, {step, b}).
struct TrainingDraw {
  size_t example = 0;  // sampled with replacement
  int t = 0;           // uniform step index in [0, T)
  Matrix noise;
  bool text_masked = false;
  size_t prompt = 0;
  std::uint64_t dropout_seed = 0;
};

TrainingDraw draw_training_sample(const TrainConfig& config, const std::vector<DiffusionExample>& dataset, int step,
                                  int b);

using TrainProgress = std::function<void(int step, const LossTerms&)>;

// Runs config.steps optimizer updates. Throws NumericalError on a non-finite
// loss or gradient.
TrainResult train(Denoiser& model, const std::vector<DiffusionExample>& dataset, const TrainConfig& config,
                  const NoiseSchedule& sched, const TrainProgress& progress = {});

// Loss of one training draw and its gradient (added into grads when given).
// Exposed for gradient checking.
LossTerms hybrid_loss_and_gradient(const Denoiser& model, const Matrix& x0, int t, const Matrix& noise,
                                   const Conditioning& cond, double lambda_vlb, const NoiseSchedule& sched,
                                   Rng* dropout_rng, ad::GradientSet* grads, double grad_scale = 1.0);

void write_loss_csv(const std::string& path, const std::vector<LossTerms>& history);

// --- sampling ---------------------------------------------------------------

struct SampleOptions {
  double guidance_scale = 2.5;
  std::uint64_t seed = 0;
  int chains = 1;
  int threads = 1;
};

struct SampleTrace {
  std::vector<Matrix> x0_snapshots;  // one per executed step, in execution order (t = T-1 first)
  Matrix sample;
  Matrix final_variance;  // empty when variance learning is off
};

// x0_uncond + s (x0_cond - x0_uncond).
Matrix guided_estimate(const Matrix& uncond, const Matrix& cond, double scale);

// One reverse step from step index t: mean from the posterior formula,
// variance from the logits (or beta_tilde when v0 is null), noise z scaled by
// the standard deviation. At t = 0 the mean is returned without noise.
Matrix ancestral_step(const Matrix& x_t, const Matrix& x0_hat, const Matrix* v0, int t, const NoiseSchedule& sched,
                      const Matrix& z);

// Runs S independent guided chains of T denoising steps each.
std::vector<SampleTrace> sample(const Denoiser& model, const Conditioning& cond, Eigen::Index frames,
                                const NoiseSchedule& sched, const SampleOptions& options,
                                std::atomic<long>* forward_calls = nullptr);

}  // namespace mdmp
