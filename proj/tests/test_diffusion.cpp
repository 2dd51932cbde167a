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

#include "doctest.h"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include "mdmp/diffusion.hpp"
#include "mdmp/errors.hpp"
#include "mdmp/rng.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>

using namespace mdmp;

TEST_CASE("loss_simple fixtures") {
  Rng rng(1);
  const Matrix x = rng.normal_matrix(3, 4);
  CHECK(loss_simple(x, x) == 0.0);
  CHECK(loss_simple(Matrix::Zero(3, 4), Matrix::Constant(3, 4, 2.0)) == 4.0);
  const Matrix y = rng.normal_matrix(3, 4);
  double acc = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) acc += (x(i, j) - y(i, j)) * (x(i, j) - y(i, j));
  CHECK(loss_simple(x, y) == doctest::Approx(acc / 12.0).epsilon(1e-14));
  CHECK_THROWS_AS(loss_simple(x, Matrix::Zero(4, 3)), InvalidArgument);
}

TEST_CASE("loss_hybrid composition") {
  CHECK(loss_hybrid(1.0, 10.0, 0.001) == doctest::Approx(1.01).epsilon(1e-15));
  CHECK(loss_hybrid(0.7, 123.0, 0.0) == 0.7);
  Denoiser model(gradcheck::tiny_config(), 2);
  const auto sched = build_cosine_schedule(50);
  const auto p = gradcheck::tiny_problem(20, 3);
  const LossTerms terms = hybrid_loss_and_gradient(model, p.x0, p.t, p.noise, p.cond, 0.001, sched, nullptr, nullptr);
  CHECK(terms.hybrid == doctest::Approx(terms.simple + 0.001 * terms.vlb).epsilon(1e-14));
}

TEST_CASE("sigma_theta interpolates in log space with exact endpoints") {
  const auto s = build_cosine_schedule(50);
  for (int t : {1, 10, 49}) {
    const Matrix one = Matrix::Ones(2, 3), zero = Matrix::Zero(2, 3);
    const auto k = static_cast<size_t>(t);
    CHECK((sigma_theta(one, t, s).array() == s.betas[k]).all());
    CHECK((sigma_theta(zero, t, s).array() == s.beta_tildes[k]).all());
  }
  const auto custom = schedule_from_betas({0.5, 0.04});
  // beta at index 1 is 0.04; pick the table so that beta_tilde is 0.01 via a direct override.
  NoiseSchedule fixed = custom;
  fixed.beta_tildes[1] = 0.01;
  CHECK(sigma_theta(Matrix::Constant(1, 1, 0.5), 1, fixed)(0, 0) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(std::abs(sigma_theta(Matrix::Constant(1, 1, 0.5), 1, fixed)(0, 0) - 0.02) < 1e-12);
  // Vanishing beta_tilde at index 0 is floored at 1e-20.
  CHECK(sigma_theta(Matrix::Zero(1, 1), 0, s)(0, 0) == 1e-20);
}

TEST_CASE("Gaussian KL fixtures") {
  CHECK(std::abs(gaussian_kl(0.3, 0.2, 0.3, 0.2)) < 1e-12);
  CHECK(std::abs(gaussian_kl(0.0, 1.0, 1.0, 1.0) - 0.5) < 1e-12);
  const double expected = 0.5 * (std::log(0.04 / 0.01) + 0.01 / 0.04 - 1.0);
  CHECK(gaussian_kl(0.0, 0.01, 0.0, 0.04) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(gaussian_kl(0.0, 0.01, 0.0, 0.04) == doctest::Approx(0.3181).epsilon(1e-4));
}

TEST_CASE("loss_vlb vanishes on matched Gaussians and is nonnegative") {
  const auto s = build_cosine_schedule(50);
  Rng rng(4);
  for (int t : {1, 7, 49}) {
    const Matrix x0 = rng.normal_matrix(4, 3), xt = rng.normal_matrix(4, 3);
    // x0_hat = x0 makes the model mean the true posterior mean; v0 = 0 makes Sigma = beta_tilde.
    CHECK(std::abs(loss_vlb(x0, xt, t, {x0, Matrix::Zero(4, 3)}, s)) < 1e-12);
    for (int k = 0; k < 20; ++k) {
      const Matrix x0_hat = rng.normal_matrix(4, 3);
      const Matrix v0 = rng.uniform_matrix(4, 3, 0.0, 1.0);
      CHECK(loss_vlb(x0, xt, t, {x0_hat, v0}, s) >= 0.0);
    }
  }
}

TEST_CASE("loss_vlb matches the closed-form KL and decoder likelihood") {
  const auto s = build_cosine_schedule(50);
  Rng rng(5);
  const Matrix x0 = rng.normal_matrix(3, 2), xt = rng.normal_matrix(3, 2), x0_hat = rng.normal_matrix(3, 2);
  const Matrix v0 = rng.uniform_matrix(3, 2, 0.0, 1.0);
  const int t = 9;
  const auto k = static_cast<size_t>(t);
  const Matrix mu_q = posterior_mean(xt, x0, t, s);
  const Matrix mu_p = posterior_mean(xt, x0_hat, t, s);
  const Matrix var_p = sigma_theta(v0, t, s);
  double kl = 0.0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    kl += gaussian_kl(mu_q.data()[i], s.beta_tildes[k], mu_p.data()[i], var_p.data()[i]);
  }
  CHECK(loss_vlb(x0, xt, t, {x0_hat, v0}, s) == doctest::Approx(kl).epsilon(1e-11));

  // Step index 0: Gaussian negative log-likelihood of x0 under the final step.
  const Matrix mu0 = posterior_mean(xt, x0_hat, 0, s);
  CHECK((mu0 - x0_hat).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix var0 = sigma_theta(v0, 0, s);
  double nll = 0.0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    const double d = x0.data()[i] - mu0.data()[i];
    nll += 0.5 * (std::log(2.0 * std::numbers::pi * var0.data()[i]) + d * d / var0.data()[i]);
  }
  CHECK(loss_vlb(x0, xt, 0, {x0_hat, v0}, s) == doctest::Approx(nll).epsilon(1e-11));

  CHECK_THROWS_AS(loss_vlb(x0, xt, t, {x0_hat, Matrix()}, s), UnsupportedConfiguration);
  Matrix bad = x0;
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(loss_vlb(bad, xt, t, {x0_hat, v0}, s), NumericalError);
}

TEST_CASE("prior KL matches the closed form") {
  const auto s = build_cosine_schedule(50);
  Rng rng(6);
  const Matrix x0 = rng.normal_matrix(2, 3);
  const double ab = s.alpha_bars.back();
  double want = 0.0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) want += gaussian_kl(std::sqrt(ab) * x0.data()[i], 1.0 - ab, 0.0, 1.0);
  CHECK(prior_kl(x0, s) == doctest::Approx(want).epsilon(1e-12));
  CHECK(prior_kl(x0, s) >= 0.0);
}

TEST_CASE("guided estimate fixtures") {
  const Matrix u = Matrix::Constant(1, 1, 1.0), c = Matrix::Constant(1, 1, 2.0);
  CHECK(guided_estimate(u, c, 2.5)(0, 0) == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(guided_estimate(u, c, 0.0) == u);
  CHECK(guided_estimate(u, c, 1.0) == c);
}

TEST_CASE("ancestral step with fixed posterior variance matches the DDPM step") {
  // betas 0.1, 0.2: alpha_1 = 0.8, alpha-bar_0 = 0.9, alpha-bar_1 = 0.72,
  // beta_tilde_1 = 0.1 / 0.28 * 0.2; x_t = 1, x0_hat = 0.5, z = 0.3.
  const auto s = schedule_from_betas({0.1, 0.2});
  const Matrix xt = Matrix::Constant(1, 1, 1.0), x0 = Matrix::Constant(1, 1, 0.5), z = Matrix::Constant(1, 1, 0.3);
  CHECK(ancestral_step(xt, x0, nullptr, 1, s, z)(0, 0) == doctest::Approx(0.7384321186631662).epsilon(1e-12));
  // The last step returns the mean without noise.
  CHECK(ancestral_step(xt, x0, nullptr, 0, s, Matrix())(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  // Learned variance with v0 = 1 uses beta_t.
  const Matrix one = Matrix::Ones(1, 1);
  const double mu = 0.6582537460894389;
  CHECK(ancestral_step(xt, x0, &one, 1, s, z)(0, 0) == doctest::Approx(mu + std::sqrt(0.2) * 0.3).epsilon(1e-12));
}

TEST_CASE("train with zero steps leaves parameters unchanged") {
  Denoiser model(gradcheck::tiny_config(), 1);
  const auto before = model.params();
  std::vector<DiffusionExample> data{{Rng(2).normal_matrix(8, 6), {Vector::Zero(512)}}};
  TrainConfig cfg;
  cfg.steps = 0;
  cfg.prefix_len = 3;
  const auto res = train(model, data, cfg, build_cosine_schedule(50));
  CHECK(res.history.empty());
  for (int i = 0; i < before.size(); ++i) CHECK(before.value(i) == model.params().value(i));
}

TEST_CASE("training is reproducible and independent of the thread count") {
  Rng rng(3);
  std::vector<DiffusionExample> data;
  for (int i = 0; i < 5; ++i) data.push_back({rng.normal_matrix(8, 6), {rng.normal_matrix(512, 1), rng.normal_matrix(512, 1)}});
  TrainConfig cfg;
  cfg.steps = 6;
  cfg.batch_size = 4;
  cfg.prefix_len = 3;
  cfg.learning_rate = 1e-3;
  const auto sched = build_cosine_schedule(50);
  auto run = [&](int threads) {
    Denoiser m(gradcheck::tiny_config(), 5);
    TrainConfig c = cfg;
    c.threads = threads;
    auto res = train(m, data, c, sched);
    return std::make_pair(res.history, m.params());
  };
  const auto [h1, p1] = run(1);
  const auto [h2, p2] = run(1);
  const auto [h3, p3] = run(3);
  REQUIRE(h1.size() == 6);
  for (size_t i = 0; i < h1.size(); ++i) {
    CHECK(h1[i].simple == h2[i].simple);
    CHECK(h1[i].hybrid == h2[i].hybrid);
    CHECK(h1[i].simple == h3[i].simple);
    CHECK(h1[i].vlb == h3[i].vlb);
  }
  for (int i = 0; i < p1.size(); ++i) {
    CHECK(p1.value(i) == p2.value(i));
    CHECK(p1.value(i) == p3.value(i));
  }
}

TEST_CASE("train validates its configuration") {
  Denoiser model(gradcheck::tiny_config(), 1);
  std::vector<DiffusionExample> data{{Matrix::Zero(8, 6), {Vector::Zero(512)}}};
  TrainConfig cfg;
  cfg.steps = 1;
  cfg.prefix_len = 3;
  CHECK_THROWS_AS(train(model, {}, cfg, build_cosine_schedule(50)), InvalidArgument);
  CHECK_THROWS_AS(train(model, data, cfg, build_cosine_schedule(20)), InvalidArgument);
  TrainConfig bad = cfg;
  bad.text_mask_prob = 1.5;
  CHECK_THROWS_AS(train(model, data, bad, build_cosine_schedule(50)), InvalidArgument);
  bad = cfg;
  bad.lambda_vlb = -1.0;
  CHECK_THROWS_AS(train(model, data, bad, build_cosine_schedule(50)), InvalidArgument);
  bad = cfg;
  bad.prefix_len = 8;
  CHECK_THROWS_AS(train(model, data, bad, build_cosine_schedule(50)), InvalidArgument);
}

TEST_CASE("sampling preserves the prefix, counts calls and records every step") {
  const Denoiser model(gradcheck::tiny_config(), 6);
  const auto sched = build_cosine_schedule(20);
  const auto p = gradcheck::tiny_problem(0, 7, 3);
  SampleOptions opt;
  opt.chains = 3;
  opt.seed = 11;
  std::atomic<long> calls{0};
  const auto traces = sample(model, p.cond, 8, sched, opt, &calls);
  CHECK(calls.load() == 2L * 20 * 3);
  REQUIRE(traces.size() == 3);
  for (const auto& tr : traces) {
    CHECK(tr.x0_snapshots.size() == 20);
    CHECK(tr.sample.topRows(3) == p.cond.prefix);
    CHECK(tr.sample.allFinite());
    CHECK(tr.final_variance.rows() == 8);
  }
  CHECK(traces[0].sample != traces[1].sample);

  opt.threads = 3;
  const auto again = sample(model, p.cond, 8, sched, opt);
  for (size_t c = 0; c < 3; ++c) CHECK(again[c].sample == traces[c].sample);
}

TEST_CASE("zero guidance equals a text-masked run") {
  const Denoiser model(gradcheck::tiny_config(), 6);
  const auto sched = build_cosine_schedule(10);
  const auto p = gradcheck::tiny_problem(0, 8, 2);
  SampleOptions opt;
  opt.chains = 2;
  opt.guidance_scale = 0.0;
  Conditioning masked = p.cond;
  masked.text_masked = true;
  const auto a = sample(model, p.cond, 8, sched, opt);
  opt.guidance_scale = 2.5;
  const auto b = sample(model, masked, 8, sched, opt);
  for (size_t c = 0; c < 2; ++c) CHECK(a[c].sample == b[c].sample);
}

TEST_CASE("without the variance channel sampling uses beta_tilde") {
  auto cfg = gradcheck::tiny_config();
  cfg.learn_variance = false;
  const Denoiser model(cfg, 6);
  const auto sched = build_cosine_schedule(10);
  const auto p = gradcheck::tiny_problem(0, 8, 2);
  SampleOptions opt;
  const auto tr = sample(model, p.cond, 8, sched, opt);
  CHECK(tr[0].final_variance.size() == 0);
  CHECK(tr[0].sample.topRows(2) == p.cond.prefix);
}

TEST_CASE("loss CSV layout") {
  const std::string path = "test_diffusion_loss.csv";
  write_loss_csv(path, {{1.0, 2.0, 1.002}, {0.5, 1.0, 0.501}});
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,L_simple,L_VLB,L_hybrid");
  std::getline(in, line);
  CHECK(line == "0,1,2,1.002");
}
