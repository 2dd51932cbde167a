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

#include "mdmp/schedule.hpp"

#include "mdmp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace mdmp {

namespace {

constexpr double kCosineOffset = 0.008;
constexpr double kMaxBeta = 0.999;

double cosine_f(double t, double T) {
  const double c = std::cos((t / T + kCosineOffset) / (1.0 + kCosineOffset) * std::numbers::pi / 2.0);
  return c * c;
}

void check_step(int t, const NoiseSchedule& sched) {
  MDMP_CHECK_ARG(t >= 0 && t < sched.T,
                 "step index " + std::to_string(t) + " outside [0, " + std::to_string(sched.T) + ")");
}

}  // namespace

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
  MDMP_CHECK_ARG(betas.size() >= 2, "schedule needs at least 2 steps");
  NoiseSchedule s;
  s.T = static_cast<int>(betas.size());
  s.betas = std::move(betas);
  s.alphas.resize(s.betas.size());
  s.alpha_bars.resize(s.betas.size());
  s.beta_tildes.resize(s.betas.size());
  double prod = 1.0;
  for (size_t i = 0; i < s.betas.size(); ++i) {
    const double beta = s.betas[i];
    MDMP_CHECK_ARG(beta > 0.0 && beta < 1.0, "betas must lie in (0, 1)");
    s.alphas[i] = 1.0 - beta;
    const double prev = prod;
    prod *= s.alphas[i];
    s.alpha_bars[i] = prod;
    s.beta_tildes[i] = (1.0 - prev) / (1.0 - prod) * beta;
  }
  return s;
}

NoiseSchedule build_cosine_schedule(int T) {
  MDMP_CHECK_ARG(T >= 2, "cosine schedule needs T >= 2");
  const double f0 = cosine_f(0.0, T);
  std::vector<double> betas(static_cast<size_t>(T));
  for (int i = 0; i < T; ++i) {
    // Step i + 1 relative to step i.
    const double ab_next = cosine_f(i + 1.0, T) / f0;
    const double ab_prev = cosine_f(static_cast<double>(i), T) / f0;
    betas[static_cast<size_t>(i)] = std::min(1.0 - ab_next / ab_prev, kMaxBeta);
  }
  return schedule_from_betas(std::move(betas));
}

Matrix q_sample(const Matrix& x0, int t, const Matrix& noise, const NoiseSchedule& sched) {
  MDMP_CHECK_ARG(x0.rows() == noise.rows() && x0.cols() == noise.cols(), "q_sample: noise shape differs from x0");
  check_step(t, sched);
  const double ab = sched.alpha_bars[static_cast<size_t>(t)];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

double posterior_mean(double x_t, double x0_hat, double alpha_t, double alpha_bar_prev, double alpha_bar_t) {
  return (std::sqrt(alpha_t) * (1.0 - alpha_bar_prev) * x_t + std::sqrt(alpha_bar_prev) * (1.0 - alpha_t) * x0_hat) /
         (1.0 - alpha_bar_t);
}

Matrix posterior_mean(const Matrix& x_t, const Matrix& x0_hat, int t, const NoiseSchedule& sched) {
  MDMP_CHECK_ARG(x_t.rows() == x0_hat.rows() && x_t.cols() == x0_hat.cols(), "posterior_mean: shape mismatch");
  check_step(t, sched);
  const double a = sched.alphas[static_cast<size_t>(t)];
  const double ab = sched.alpha_bars[static_cast<size_t>(t)];
  const double ab_prev = sched.alpha_bar_prev(t);
  const double cx = std::sqrt(a) * (1.0 - ab_prev) / (1.0 - ab);
  const double c0 = std::sqrt(ab_prev) * (1.0 - a) / (1.0 - ab);
  return cx * x_t + c0 * x0_hat;
}

}  // namespace mdmp
