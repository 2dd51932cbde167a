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

#include "mdmp/tensor.hpp"

#include <vector>

namespace mdmp {

// Fixed forward-process noise schedule.
//
// Tables are indexed by step index i in [0, T), where index i is diffusion
// step i + 1. Index 0 is therefore the last denoising step and uses the
// convention alpha_bar_prev(0) = 1, which makes beta_tildes[0] = 0.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
  std::vector<double> beta_tildes;

  [[nodiscard]] double alpha_bar_prev(int t) const { return t == 0 ? 1.0 : alpha_bars[static_cast<size_t>(t - 1)]; }
};

// Cosine schedule: alpha_bar(t) = f(t)/f(0), f(t) = cos^2(((t/T)+s)/(1+s) * pi/2),
// s = 0.008, betas clipped to 0.999. Throws InvalidArgument for T < 2.
NoiseSchedule build_cosine_schedule(int T);

// Builds the derived tables from an explicit beta list. Betas must lie in (0, 1).
NoiseSchedule schedule_from_betas(std::vector<double> betas);

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise.
Matrix q_sample(const Matrix& x0, int t, const Matrix& noise, const NoiseSchedule& sched);

// Mean of q(x_{t-1} | x_t, x0) with x0 replaced by the model estimate.
Matrix posterior_mean(const Matrix& x_t, const Matrix& x0_hat, int t, const NoiseSchedule& sched);

// Closed-form posterior mean on raw coefficients; the tensor overload is a
// thin wrapper over this.
double posterior_mean(double x_t, double x0_hat, double alpha_t, double alpha_bar_prev, double alpha_bar_t);

}  // namespace mdmp
