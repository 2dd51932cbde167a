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

#include "mdmp/diffusion.hpp"

#include "mdmp/errors.hpp"
#include "mdmp/parallel.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace mdmp {

using Eigen::Index;

namespace {

constexpr double kBetaTildeFloor = 1e-20;

double log_beta_tilde(int t, const NoiseSchedule& sched) {
  return std::log(std::max(sched.beta_tildes[static_cast<size_t>(t)], kBetaTildeFloor));
}

void check_step(int t, const NoiseSchedule& sched) {
  MDMP_CHECK_ARG(t >= 0 && t < sched.T, "step index " + std::to_string(t) + " outside [0, " +
                                            std::to_string(sched.T) + ")");
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

void TrainConfig::validate() const {
  MDMP_CHECK_ARG(lambda_vlb >= 0.0, "lambda_vlb must be nonnegative");
  MDMP_CHECK_ARG(text_mask_prob >= 0.0 && text_mask_prob <= 1.0, "text_mask_prob must be in [0, 1]");
  MDMP_CHECK_ARG(batch_size >= 1, "batch_size must be positive");
  MDMP_CHECK_ARG(learning_rate > 0.0, "learning_rate must be positive");
  MDMP_CHECK_ARG(steps >= 0, "steps must be nonnegative");
  MDMP_CHECK_ARG(T >= 2, "T must be at least 2");
  MDMP_CHECK_ARG(prefix_len >= 0, "prefix_len must be nonnegative");
  MDMP_CHECK_ARG(grad_clip_norm > 0.0, "grad_clip_norm must be positive");
}

double loss_simple(const Matrix& x0, const Matrix& x0_hat) {
  MDMP_CHECK_ARG(x0.rows() == x0_hat.rows() && x0.cols() == x0_hat.cols(), "loss_simple: shape mismatch");
  MDMP_CHECK_ARG(x0.size() > 0, "loss_simple: empty tensors");
  return (x0 - x0_hat).squaredNorm() / static_cast<double>(x0.size());
}

double loss_hybrid(double simple, double vlb, double lambda_vlb) { return simple + lambda_vlb * vlb; }

Matrix sigma_theta(const Matrix& v0, int t, const NoiseSchedule& sched) {
  check_step(t, sched);
  const double beta = sched.betas[static_cast<size_t>(t)];
  const double beta_tilde = std::max(sched.beta_tildes[static_cast<size_t>(t)], kBetaTildeFloor);
  // beta^v * beta_tilde^(1 - v) equals exp(v log beta + (1 - v) log beta_tilde)
  // and is exact at both endpoints.
  Matrix out(v0.rows(), v0.cols());
  for (Eigen::Index i = 0; i < v0.size(); ++i) {
    const double v = v0.data()[i];
    out.data()[i] = std::pow(beta, v) * std::pow(beta_tilde, 1.0 - v);
  }
  return out;
}

double gaussian_kl(double mean_q, double var_q, double mean_p, double var_p) {
  const double d = mean_q - mean_p;
  return 0.5 * (std::log(var_p / var_q) + (var_q + d * d) / var_p - 1.0);
}

ad::Var loss_vlb_graph(ad::Var v0, const Matrix& x0_hat, const Matrix& x0, const Matrix& x_t, int t,
                       const NoiseSchedule& sched) {
  check_step(t, sched);
  MDMP_CHECK_ARG(v0.rows() == x0.rows() && v0.cols() == x0.cols() && x0_hat.rows() == x0.rows() &&
                     x0_hat.cols() == x0.cols() && x_t.rows() == x0.rows() && x_t.cols() == x0.cols(),
                 "loss_vlb: shape mismatch");
  if (!all_finite(v0.value()) || !all_finite(x0_hat) || !all_finite(x0) || !all_finite(x_t)) {
    throw NumericalError("loss_vlb: non-finite input");
  }
  ad::Tape& tape = *v0.tape;
  const double lb = std::log(sched.betas[static_cast<size_t>(t)]);
  const double lbt = log_beta_tilde(t, sched);
  // log Sigma is affine in the logits.
  ad::Var log_sigma = ad::add_scalar(ad::scale(v0, lb - lbt), lbt);
  ad::Var inv_sigma = ad::exp(ad::scale(log_sigma, -1.0));
  const Matrix model_mean = posterior_mean(x_t, x0_hat, t, sched);
  const double n = static_cast<double>(x0.size());
  if (t == 0) {
    const Matrix sq = (x0 - model_mean).array().square();
    ad::Var terms = ad::add(log_sigma, ad::mul(tape.constant(sq), inv_sigma));
    return ad::add_scalar(ad::scale(ad::sum(terms), 0.5), 0.5 * n * std::log(2.0 * std::numbers::pi));
  }
  const Matrix true_mean = posterior_mean(x_t, x0, t, sched);
  const double bt = sched.beta_tildes[static_cast<size_t>(t)];
  const Matrix numer = (true_mean - model_mean).array().square() + bt;
  ad::Var terms = ad::add(log_sigma, ad::mul(tape.constant(numer), inv_sigma));
  return ad::add_scalar(ad::scale(ad::sum(terms), 0.5), -0.5 * n * (lbt + 1.0));
}

double loss_vlb(const Matrix& x0, const Matrix& x_t, int t, const DenoiserOutput& out, const NoiseSchedule& sched) {
  if (out.v0.size() == 0) throw UnsupportedConfiguration("loss_vlb needs the variance channel");
  ad::Tape tape(false);
  const double v = loss_vlb_graph(tape.constant(out.v0), out.x0_hat, x0, x_t, t, sched).value()(0, 0);
  if (!std::isfinite(v)) throw NumericalError("loss_vlb: non-finite result");
  return v;
}

double prior_kl(const Matrix& x0, const NoiseSchedule& sched) {
  const double ab = sched.alpha_bars.back();
  const double var = 1.0 - ab;
  return 0.5 * ((-std::log(var) + var - 1.0) * static_cast<double>(x0.size()) + ab * x0.squaredNorm());
}

// --- optimizer ----------------------------------------------------------------

AdamOptimizer::AdamOptimizer(const ad::ParameterSet& params, double learning_rate, double clip_norm)
    : lr_(learning_rate), clip_(clip_norm), m_(params.zeros_like()), v_(params.zeros_like()) {}

double AdamOptimizer::step(ad::ParameterSet& params, ad::GradientSet& grads) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericalError("non-finite gradient norm");
  const double clip_scale = norm > clip_ ? clip_ / norm : 1.0;
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (int i = 0; i < params.size(); ++i) {
    const auto k = static_cast<size_t>(i);
    const Matrix g = grads[k] * clip_scale;
    m_[k] = kBeta1 * m_[k] + (1.0 - kBeta1) * g;
    v_[k] = kBeta2 * v_[k] + (1.0 - kBeta2) * g.cwiseProduct(g);
    params.value(i).array() -= lr_ * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + kEps);
  }
  return norm;
}

// --- training -------------------------------------------------------------------

LossTerms hybrid_loss_and_gradient(const Denoiser& model, const Matrix& x0, int t, const Matrix& noise,
                                   const Conditioning& cond, double lambda_vlb, const NoiseSchedule& sched,
                                   Rng* dropout_rng, ad::GradientSet* grads, double grad_scale) {
  const Matrix x_t = q_sample(x0, t, noise, sched);
  ad::Tape tape(grads != nullptr);
  const DenoiserGraph g = model.build(tape, x_t, t, cond, dropout_rng);
  // The model sees x_t with the prefix imposed; the posterior terms use the
  // same input so that both sides describe one state.
  const Matrix x_in = model.encoder_input(x_t, cond);
  ad::Var simple = ad::mean(ad::mul(ad::sub(g.x0_hat, tape.constant(x0)), ad::sub(g.x0_hat, tape.constant(x0))));
  LossTerms terms;
  terms.simple = simple.value()(0, 0);
  ad::Var total = simple;
  if (g.has_variance()) {
    ad::Var vlb = loss_vlb_graph(g.v0, g.x0_hat.value(), x0, x_in, t, sched);
    terms.vlb = vlb.value()(0, 0);
    total = ad::add(simple, ad::scale(vlb, lambda_vlb));
  }
  terms.hybrid = total.value()(0, 0);
  if (!std::isfinite(terms.hybrid)) {
    throw NumericalError("non-finite loss (simple=" + std::to_string(terms.simple) +
                         ", vlb=" + std::to_string(terms.vlb) + ")");
  }
  if (grads != nullptr) {
    tape.backward(total, grad_scale);
    tape.accumulate(*grads);
  }
  return terms;
}

TrainingDraw draw_training_sample(const TrainConfig& config, const std::vector<DiffusionExample>& dataset, int step,
                                  int b) {
  Rng rng(derive_seed(config.seed, {static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(b)}));
  TrainingDraw d;
  d.example = rng.index(dataset.size());
  const auto& ex = dataset[d.example];
  d.t = static_cast<int>(rng.index(static_cast<std::uint64_t>(config.T)));
  d.noise = rng.normal_matrix(ex.motion.rows(), ex.motion.cols());
  d.text_masked = rng.bernoulli(config.text_mask_prob);
  d.prompt = rng.index(ex.texts.size());
  d.dropout_seed = rng.index(std::numeric_limits<std::uint64_t>::max());
  return d;
}

TrainResult train(Denoiser& model, const std::vector<DiffusionExample>& dataset, const TrainConfig& config,
                  const NoiseSchedule& sched, const TrainProgress& progress) {
  config.validate();
  MDMP_CHECK_ARG(!dataset.empty(), "train: empty dataset");
  MDMP_CHECK_ARG(sched.T == config.T, "train: schedule length differs from config.T");
  for (const auto& ex : dataset) {
    MDMP_CHECK_ARG(ex.motion.rows() > config.prefix_len, "train: sequence shorter than prefix");
    MDMP_CHECK_ARG(!ex.texts.empty(), "train: example without text embedding");
  }

  TrainResult result;
  result.history.reserve(static_cast<size_t>(config.steps));
  AdamOptimizer opt(model.params(), config.learning_rate, config.grad_clip_norm);
  const int B = config.batch_size;
  const int wave = std::clamp(config.threads, 1, B);
  std::vector<ad::GradientSet> sample_grads(static_cast<size_t>(wave));
  std::vector<LossTerms> sample_terms(static_cast<size_t>(B));

  for (int step = 0; step < config.steps; ++step) {
    ad::GradientSet total = model.params().zeros_like();
    for (int start = 0; start < B; start += wave) {
      const int count = std::min(wave, B - start);
      parallel_for(count, count, [&](int w) {
        const int b = start + w;
        const TrainingDraw d = draw_training_sample(config, dataset, step, b);
        const auto& ex = dataset[d.example];
        Conditioning cond;
        cond.prefix = ex.motion.topRows(config.prefix_len);
        cond.text_masked = d.text_masked;
        cond.text = ex.texts[d.prompt];
        Rng dropout_rng(d.dropout_seed);
        auto& g = sample_grads[static_cast<size_t>(w)];
        g = model.params().zeros_like();
        sample_terms[static_cast<size_t>(b)] = hybrid_loss_and_gradient(
            model, ex.motion, d.t, d.noise, cond, config.lambda_vlb, sched, &dropout_rng, &g, 1.0 / B);
      });
      // Fixed summation order keeps results independent of the thread count.
      for (int w = 0; w < count; ++w) {
        for (size_t k = 0; k < total.size(); ++k) total[k] += sample_grads[static_cast<size_t>(w)][k];
      }
    }
    LossTerms mean_terms;
    for (const auto& lt : sample_terms) {
      mean_terms.simple += lt.simple / B;
      mean_terms.vlb += lt.vlb / B;
      mean_terms.hybrid += lt.hybrid / B;
    }
    if (!std::isfinite(mean_terms.hybrid)) {
      throw NumericalError("training diverged at step " + std::to_string(step));
    }
    try {
      opt.step(model.params(), total);
    } catch (const NumericalError& e) {
      throw NumericalError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    result.history.push_back(mean_terms);
    if (progress) progress(step, mean_terms);
  }
  return result;
}

void write_loss_csv(const std::string& path, const std::vector<LossTerms>& history) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << "step,L_simple,L_VLB,L_hybrid\n";
  out.precision(17);
  for (size_t i = 0; i < history.size(); ++i) {
    out << i << ',' << history[i].simple << ',' << history[i].vlb << ',' << history[i].hybrid << '\n';
  }
}

// --- sampling -----------------------------------------------------------------

Matrix guided_estimate(const Matrix& uncond, const Matrix& cond, double scale) {
  MDMP_CHECK_ARG(uncond.rows() == cond.rows() && uncond.cols() == cond.cols(), "guidance: shape mismatch");
  return uncond + scale * (cond - uncond);
}

Matrix ancestral_step(const Matrix& x_t, const Matrix& x0_hat, const Matrix* v0, int t, const NoiseSchedule& sched,
                      const Matrix& z) {
  Matrix mean = posterior_mean(x_t, x0_hat, t, sched);
  if (t == 0) return mean;
  MDMP_CHECK_ARG(z.rows() == x_t.rows() && z.cols() == x_t.cols(), "ancestral_step: noise shape mismatch");
  if (v0 != nullptr) {
    return mean + sigma_theta(*v0, t, sched).cwiseSqrt().cwiseProduct(z);
  }
  return mean + std::sqrt(sched.beta_tildes[static_cast<size_t>(t)]) * z;
}

std::vector<SampleTrace> sample(const Denoiser& model, const Conditioning& cond, Index frames,
                                const NoiseSchedule& sched, const SampleOptions& options,
                                std::atomic<long>* forward_calls) {
  MDMP_CHECK_ARG(options.chains >= 1, "sample: need at least one chain");
  MDMP_CHECK_ARG(cond.prefix_len() < frames, "sample: prefix length must be smaller than the frame count");
  const Index D = model.config().features;
  const bool learned = model.config().learn_variance;
  Conditioning uncond = cond;
  uncond.text_masked = true;

  std::vector<SampleTrace> traces(static_cast<size_t>(options.chains));
  parallel_for(options.chains, options.threads, [&](int c) {
    Rng rng(derive_seed(options.seed, {0x5a11, static_cast<std::uint64_t>(c)}));
    SampleTrace& trace = traces[static_cast<size_t>(c)];
    trace.x0_snapshots.reserve(static_cast<size_t>(sched.T));
    Matrix x = rng.normal_matrix(frames, D);
    for (int t = sched.T - 1; t >= 0; --t) {
      x = model.encoder_input(x, cond);
      const DenoiserOutput out_c = model.forward(x, t, cond);
      const DenoiserOutput out_u = model.forward(x, t, uncond);
      if (forward_calls != nullptr) *forward_calls += 2;
      const Matrix x0 = guided_estimate(out_u.x0_hat, out_c.x0_hat, options.guidance_scale);
      Matrix v0;
      if (learned) v0 = guided_estimate(out_u.v0, out_c.v0, options.guidance_scale).cwiseMax(0.0).cwiseMin(1.0);
      trace.x0_snapshots.push_back(x0);
      if (t > 0) {
        const Matrix z = rng.normal_matrix(frames, D);
        x = ancestral_step(x, x0, learned ? &v0 : nullptr, t, sched, z);
      } else {
        x = ancestral_step(x, x0, nullptr, 0, sched, Matrix());
        if (learned) trace.final_variance = sigma_theta(v0, 0, sched);
      }
    }
    trace.sample = model.encoder_input(x, cond);
  });
  return traces;
}

}  // namespace mdmp
