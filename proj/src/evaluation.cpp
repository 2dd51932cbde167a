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

#include "mdmp/evaluation.hpp"

#include "mdmp/errors.hpp"
#include "mdmp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace mdmp {

using Eigen::Index;

namespace {

constexpr int kRandomBaselineRepeats = 10;

int horizon_bucket(long k, double fps) {
  // Small tolerance so that exact multiples of 0.5 s land in their own bucket.
  return static_cast<int>(std::ceil((static_cast<double>(k + 1) / fps) / kHorizonBucketSeconds - 1e-9));
}

// Mean error left after removing `removed` cells in the given order, where
// `keys` (aligned with `order`) defines tie groups: a cutoff inside a tie group
// removes the group's average error per removed cell.
double remaining_mean(const std::vector<double>& errors, const std::vector<size_t>& order,
                      const std::vector<double>& keys, size_t removed, double total) {
  const size_t n = order.size();
  double removed_sum = 0.0;
  size_t i = 0;
  while (i < removed) {
    size_t j = i;
    double group_sum = 0.0;
    while (j < n && keys[order[j]] == keys[order[i]]) group_sum += errors[order[j++]];
    const size_t group = j - i;
    const size_t take = std::min(group, removed - i);
    removed_sum += group_sum * static_cast<double>(take) / static_cast<double>(group);
    i += take;
    if (take < group) break;
  }
  return (total - removed_sum) / static_cast<double>(n - removed);
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j - 1);
    for (size_t k = i; k < j; ++k) r[idx[k]] = avg;
    i = j;
  }
  return r;
}

}  // namespace

double MpjpeReport::at(double seconds) const {
  for (size_t i = 0; i < bucket_seconds.size(); ++i) {
    if (std::abs(bucket_seconds[i] - seconds) < 1e-9) return bucket_mm[i];
  }
  return std::numeric_limits<double>::quiet_NaN();
}

Matrix joint_errors(const Matrix& pred, const Matrix& gt) {
  MDMP_CHECK_ARG(pred.rows() == gt.rows() && pred.cols() == gt.cols(), "mpjpe: prediction and ground truth differ in shape");
  MDMP_CHECK_ARG(pred.cols() % 3 == 0, "mpjpe: inputs must be 3D position layouts");
  const Index J = pred.cols() / 3;
  Matrix err(pred.rows(), J);
  for (Index i = 0; i < pred.rows(); ++i) {
    for (Index j = 0; j < J; ++j) err(i, j) = (pred.row(i).segment<3>(3 * j) - gt.row(i).segment<3>(3 * j)).norm();
  }
  return err;
}

MpjpeReport mpjpe(const MotionTensor& pred, const MotionTensor& gt, int first_predicted_frame) {
  MDMP_CHECK_ARG(pred.fps > 0.0, "mpjpe: fps must be positive");
  MDMP_CHECK_ARG(first_predicted_frame >= 0 && first_predicted_frame <= pred.frames(),
                 "mpjpe: first predicted frame out of range");
  const Matrix err = joint_errors(pred.data, gt.data);
  MpjpeReport r;
  std::vector<double> frame_mm;
  for (Index i = first_predicted_frame; i < err.rows(); ++i) frame_mm.push_back(err.row(i).mean() * 1000.0);
  std::vector<double> sums;
  for (size_t k = 0; k < frame_mm.size(); ++k) {
    const int b = horizon_bucket(static_cast<long>(k), pred.fps);
    if (static_cast<int>(sums.size()) < b) {
      sums.resize(static_cast<size_t>(b), 0.0);
      r.bucket_frames.resize(static_cast<size_t>(b), 0);
    }
    sums[static_cast<size_t>(b - 1)] += frame_mm[k];
    ++r.bucket_frames[static_cast<size_t>(b - 1)];
  }
  for (size_t b = 0; b < sums.size(); ++b) {
    r.bucket_seconds.push_back(static_cast<double>(b + 1) * kHorizonBucketSeconds);
    r.bucket_mm.push_back(r.bucket_frames[b] > 0 ? sums[b] / static_cast<double>(r.bucket_frames[b]) : 0.0);
  }
  r.per_frame_mm.push_back(std::move(frame_mm));
  return r;
}

MpjpeReport merge_reports(const std::vector<MpjpeReport>& reports) {
  MpjpeReport out;
  std::vector<double> sums;
  for (const auto& r : reports) {
    if (sums.size() < r.bucket_mm.size()) {
      sums.resize(r.bucket_mm.size(), 0.0);
      out.bucket_frames.resize(r.bucket_mm.size(), 0);
    }
    for (size_t b = 0; b < r.bucket_mm.size(); ++b) {
      sums[b] += r.bucket_mm[b] * static_cast<double>(r.bucket_frames[b]);
      out.bucket_frames[b] += r.bucket_frames[b];
    }
    out.per_frame_mm.insert(out.per_frame_mm.end(), r.per_frame_mm.begin(), r.per_frame_mm.end());
  }
  for (size_t b = 0; b < sums.size(); ++b) {
    out.bucket_seconds.push_back(static_cast<double>(b + 1) * kHorizonBucketSeconds);
    out.bucket_mm.push_back(out.bucket_frames[b] > 0 ? sums[b] / static_cast<double>(out.bucket_frames[b]) : 0.0);
  }
  return out;
}

SparsificationResult sparsification(const std::vector<double>& errors, const std::vector<double>& uncertainty,
                                    int steps, std::uint64_t seed) {
  MDMP_CHECK_ARG(errors.size() == uncertainty.size(), "sparsification: errors and uncertainty differ in size");
  MDMP_CHECK_ARG(steps >= 2, "sparsification: need at least 2 steps");
  MDMP_CHECK_ARG(!errors.empty(), "sparsification: no cells");
  for (size_t i = 0; i < errors.size(); ++i) {
    if (!std::isfinite(errors[i]) || !std::isfinite(uncertainty[i])) {
      throw NumericalError("sparsification: non-finite entry at cell " + std::to_string(i));
    }
  }
  const size_t n = errors.size();
  const double total = std::accumulate(errors.begin(), errors.end(), 0.0);
  const double base = total / static_cast<double>(n);

  auto descending = [](const std::vector<double>& key) {
    std::vector<size_t> idx(key.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return key[a] > key[b]; });
    return idx;
  };
  const auto by_unc = descending(uncertainty);
  const auto by_err = descending(errors);

  std::vector<std::vector<size_t>> random_orders;
  std::vector<double> distinct(n);
  std::iota(distinct.begin(), distinct.end(), 0.0);  // unique keys: no tie groups
  for (int r = 0; r < kRandomBaselineRepeats; ++r) {
    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(seed, {0x7a7d, static_cast<std::uint64_t>(r)}));
    for (size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    random_orders.push_back(std::move(perm));
  }

  SparsificationResult res;
  for (int s = 0; s < steps; ++s) {
    const double f = static_cast<double>(s) / steps;
    const auto removed = static_cast<size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
    res.fractions.push_back(f);
    if (base == 0.0) {
      res.curve.push_back(1.0);
      res.oracle.push_back(1.0);
      res.random_baseline.push_back(1.0);
      continue;
    }
    res.curve.push_back(remaining_mean(errors, by_unc, uncertainty, removed, total) / base);
    res.oracle.push_back(remaining_mean(errors, by_err, errors, removed, total) / base);
    double rnd = 0.0;
    for (const auto& perm : random_orders) rnd += remaining_mean(errors, perm, distinct, removed, total);
    res.random_baseline.push_back(rnd / kRandomBaselineRepeats / base);
  }
  for (int s = 0; s < steps; ++s) {
    res.sparsification_error += (res.curve[static_cast<size_t>(s)] - res.oracle[static_cast<size_t>(s)]) / steps;
    res.random_sparsification_error +=
        (res.random_baseline[static_cast<size_t>(s)] - res.oracle[static_cast<size_t>(s)]) / steps;
  }
  return res;
}

double spearman_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  MDMP_CHECK_ARG(x.size() == y.size() && x.size() >= 2, "spearman: need two equally sized samples");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

void write_mpjpe_csv(const std::string& path, const MpjpeReport& report) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << "horizon_s,mpjpe_mm,frames\n";
  out.precision(10);
  for (size_t b = 0; b < report.bucket_mm.size(); ++b) {
    out << report.bucket_seconds[b] << ',' << report.bucket_mm[b] << ',' << report.bucket_frames[b] << '\n';
  }
}

void write_sparsification_csv(const std::string& path, const SparsificationResult& r) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out.precision(17);
  out << "# sparsification_error = mean over fractions of (curve - oracle): " << r.sparsification_error << '\n';
  out << "# random_sparsification_error = mean over fractions of (random - oracle): " << r.random_sparsification_error
      << '\n';
  out << "fraction,curve,oracle,random\n";
  for (size_t i = 0; i < r.fractions.size(); ++i) {
    out << r.fractions[i] << ',' << r.curve[i] << ',' << r.oracle[i] << ',' << r.random_baseline[i] << '\n';
  }
}

void write_line_plot_svg(const std::string& path, const std::string& title, const std::string& x_label,
                         const std::vector<double>& x, const std::vector<PlotSeries>& series) {
  constexpr double kW = 640, kH = 420, kLeft = 60, kRight = 150, kTop = 40, kBottom = 50;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (double v : x) {
    xmin = std::min(xmin, v);
    xmax = std::max(xmax, v);
  }
  for (const auto& s : series) {
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  if (!(ymax > ymin)) ymax = ymin + 1.0;
  auto px = [&](double v) { return kLeft + (v - xmin) / (xmax - xmin) * (kW - kLeft - kRight); };
  auto py = [&](double v) { return kH - kBottom - (v - ymin) / (ymax - ymin) * (kH - kTop - kBottom); };

  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out.precision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
      << title << "</text>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight << "\" y2=\"" << kH - kBottom
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kH - kBottom
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = ymin + (ymax - ymin) * k / 4.0;
    const double xv = xmin + (xmax - xmin) * k / 4.0;
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(yv) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << yv << "</text>\n";
    out << "<text x=\"" << px(xv) << "\" y=\"" << kH - kBottom + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << xv << "</text>\n";
  }
  out << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label << "</text>\n";
  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % (sizeof(kColors) / sizeof(kColors[0]))];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    const size_t n = std::min(x.size(), series[s].values.size());
    for (size_t i = 0; i < n; ++i) {
      if (!std::isfinite(series[s].values[i])) continue;
      out << px(x[i]) << ',' << py(series[s].values[i]) << ' ';
    }
    out << "\"/>\n";
    const double ly = kTop + 18.0 * static_cast<double>(s);
    out << "<line x1=\"" << kW - kRight + 10 << "\" y1=\"" << ly << "\" x2=\"" << kW - kRight + 30 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kW - kRight + 35 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << series[s].name << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace mdmp
