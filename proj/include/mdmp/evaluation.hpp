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

#include <cstdint>
#include <string>
#include <vector>

namespace mdmp {

inline constexpr double kHorizonBucketSeconds = 0.5;

// MPJPE by prediction horizon. Bucket b (1-based) holds the predicted frames
// whose horizon (k + 1) / fps, k counted from the first predicted frame, lies in
// ((b - 1) * 0.5 s, b * 0.5 s].
struct MpjpeReport {
  std::vector<double> bucket_seconds;
  std::vector<double> bucket_mm;     // mean error per bucket, millimeters
  std::vector<long> bucket_frames;   // frame-sequence pairs contributing
  std::vector<std::vector<double>> per_frame_mm;  // per sequence, per predicted frame

  [[nodiscard]] double at(double seconds) const;  // NaN when the bucket is absent
};

// N x J Euclidean joint errors (meters) between two 3D position sequences.
Matrix joint_errors(const Matrix& pred, const Matrix& gt);

// Mean over joints per frame, bucketed by horizon; reported in millimeters.
MpjpeReport mpjpe(const MotionTensor& pred, const MotionTensor& gt, int first_predicted_frame = 0);

// Pools several per-sequence reports (frame-weighted mean per bucket).
MpjpeReport merge_reports(const std::vector<MpjpeReport>& reports);

struct SparsificationResult {
  std::vector<double> fractions;
  std::vector<double> curve;
  std::vector<double> oracle;
  std::vector<double> random_baseline;
  double sparsification_error = 0.0;         // mean over fractions of curve - oracle
  double random_sparsification_error = 0.0;  // same for the random baseline
};

// Pools all cells, removes the top fraction f in {0, 1/M, ..., (M-1)/M} by
// uncertainty and reports the mean remaining error normalized by the f = 0
// value. A cutoff inside a group of tied uncertainties removes that group's
// mean error per removed cell. The oracle ranks by the error itself; the random
// baseline averages 10 seeded random removal orders.
SparsificationResult sparsification(const std::vector<double>& errors, const std::vector<double>& uncertainty,
                                    int steps = 20, std::uint64_t seed = 0);

double spearman_correlation(const std::vector<double>& x, const std::vector<double>& y);

void write_mpjpe_csv(const std::string& path, const MpjpeReport& report);
void write_sparsification_csv(const std::string& path, const SparsificationResult& result);

struct PlotSeries {
  std::string name;
  std::vector<double> values;
};

// Plain SVG line plot; output depends only on the inputs.
void write_line_plot_svg(const std::string& path, const std::string& title, const std::string& x_label,
                         const std::vector<double>& x, const std::vector<PlotSeries>& series);

}  // namespace mdmp
