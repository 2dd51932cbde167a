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

#include "mdmp/uncertainty.hpp"

#include "mdmp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mdmp {

using Eigen::Index;

namespace {

// Population standard deviation across a list of equally shaped matrices.
Matrix elementwise_std(const std::vector<Matrix>& xs, size_t begin) {
  const auto count = static_cast<double>(xs.size() - begin);
  Matrix mu = Matrix::Zero(xs[begin].rows(), xs[begin].cols());
  for (size_t i = begin; i < xs.size(); ++i) {
    MDMP_CHECK_ARG(xs[i].rows() == mu.rows() && xs[i].cols() == mu.cols(), "uncertainty: shape mismatch");
    mu += xs[i];
  }
  mu /= count;
  Matrix var = Matrix::Zero(mu.rows(), mu.cols());
  for (size_t i = begin; i < xs.size(); ++i) var.array() += (xs[i] - mu).array().square();
  return (var / count).cwiseSqrt();
}

}  // namespace

std::string to_string(UncertaintyKind kind) {
  switch (kind) {
    case UncertaintyKind::kModeDivergence: return "mode_divergence";
    case UncertaintyKind::kDenoisingFluctuations: return "denoising_fluctuations";
    case UncertaintyKind::kPredictedVariance: return "predicted_variance";
  }
  return "unknown";
}

UncertaintyKind uncertainty_from_string(const std::string& name) {
  if (name == "mode" || name == "mode_divergence") return UncertaintyKind::kModeDivergence;
  if (name == "fluct" || name == "denoising_fluctuations") return UncertaintyKind::kDenoisingFluctuations;
  if (name == "var" || name == "predicted_variance") return UncertaintyKind::kPredictedVariance;
  throw InvalidArgument("unknown uncertainty index '" + name + "' (expected mode, fluct or var)");
}

JointMap JointMap::from_features(std::vector<int> feature_joint) {
  JointMap m;
  m.feature_joint = std::move(feature_joint);
  for (int j : m.feature_joint) m.joints = std::max(m.joints, j + 1);
  return m;
}

Matrix aggregate_by_joint(const Matrix& per_feature, const JointMap& map) {
  MDMP_CHECK_ARG(per_feature.cols() == static_cast<Index>(map.feature_joint.size()),
                 "joint map covers " + std::to_string(map.feature_joint.size()) + " features, tensor has " +
                     std::to_string(per_feature.cols()));
  Matrix out = Matrix::Zero(per_feature.rows(), map.joints);
  std::vector<int> counts(static_cast<size_t>(map.joints), 0);
  for (size_t f = 0; f < map.feature_joint.size(); ++f) {
    const int j = map.feature_joint[f];
    if (j < 0) continue;
    out.col(j) += per_feature.col(static_cast<Index>(f));
    ++counts[static_cast<size_t>(j)];
  }
  for (int j = 0; j < map.joints; ++j) {
    if (counts[static_cast<size_t>(j)] > 0) out.col(j) /= counts[static_cast<size_t>(j)];
  }
  return out;
}

UncertaintyGrid mode_divergence(const std::vector<Matrix>& samples, const JointMap& map) {
  MDMP_CHECK_ARG(samples.size() >= 2, "mode divergence needs at least 2 samples");
  return {aggregate_by_joint(elementwise_std(samples, 0), map), UncertaintyKind::kModeDivergence};
}

UncertaintyGrid denoising_fluctuations(const std::vector<Matrix>& snapshots, const JointMap& map, int window) {
  MDMP_CHECK_ARG(window >= 1, "fluctuation window must be positive");
  MDMP_CHECK_ARG(static_cast<size_t>(window) <= snapshots.size(),
                 "fluctuation window " + std::to_string(window) + " exceeds the " +
                     std::to_string(snapshots.size()) + " recorded steps");
  return {aggregate_by_joint(elementwise_std(snapshots, snapshots.size() - static_cast<size_t>(window)), map),
          UncertaintyKind::kDenoisingFluctuations};
}

UncertaintyGrid predicted_variance(const Matrix& final_variance, const JointMap& map) {
  if (final_variance.size() == 0) {
    throw UnsupportedConfiguration("predicted variance requires a model trained with variance learning");
  }
  return {aggregate_by_joint(final_variance, map), UncertaintyKind::kPredictedVariance};
}

std::vector<PresenceZone> presence_zones(const Matrix& positions, const UncertaintyGrid& grid,
                                         const std::vector<int>& joints, double scale) {
  MDMP_CHECK_ARG(positions.cols() % 3 == 0, "presence zones need a 3D position layout");
  const Index J = positions.cols() / 3;
  MDMP_CHECK_ARG(grid.values.rows() == positions.rows() && grid.values.cols() == J,
                 "presence zones: grid shape does not match the positions");
  MDMP_CHECK_ARG(scale >= 0.0, "presence zones: scale must be nonnegative");
  std::vector<PresenceZone> zones;
  for (int j : joints) {
    MDMP_CHECK_ARG(j >= 0 && j < J, "presence zones: joint " + std::to_string(j) + " out of range");
    PresenceZone z;
    z.joint = j;
    z.centers = positions.middleCols(3 * j, 3);
    z.radii.resize(static_cast<size_t>(positions.rows()));
    for (Index i = 0; i < positions.rows(); ++i) z.radii[static_cast<size_t>(i)] = grid.values(i, j) * scale;
    zones.push_back(std::move(z));
  }
  return zones;
}

void write_grid_csv(const std::string& path, const UncertaintyGrid& grid) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << "frame";
  for (Index j = 0; j < grid.values.cols(); ++j) out << ",joint_" << j;
  out << '\n';
  out.precision(17);
  for (Index i = 0; i < grid.values.rows(); ++i) {
    out << i;
    for (Index j = 0; j < grid.values.cols(); ++j) out << ',' << grid.values(i, j);
    out << '\n';
  }
}

UncertaintyGrid read_grid_csv(const std::string& path, UncertaintyKind kind) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("frame", 0) != 0) throw FormatError(path + ": missing header");
  const auto cols = static_cast<Index>(std::count(line.begin(), line.end(), ','));
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    std::getline(ss, cell, ',');  // frame index
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError(path + ": bad number '" + cell + "'");
      }
    }
    if (static_cast<Index>(row.size()) != cols) throw FormatError(path + ": ragged row");
    rows.push_back(std::move(row));
  }
  UncertaintyGrid g;
  g.kind = kind;
  g.values.resize(static_cast<Index>(rows.size()), cols);
  for (size_t r = 0; r < rows.size(); ++r) {
    for (Index c = 0; c < cols; ++c) g.values(static_cast<Index>(r), c) = rows[r][static_cast<size_t>(c)];
  }
  return g;
}

void write_presence_csv(const std::string& path, const std::vector<PresenceZone>& zones) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << "joint,frame,x,y,z,radius\n";
  out.precision(17);
  for (const auto& z : zones) {
    for (Index i = 0; i < z.centers.rows(); ++i) {
      out << z.joint << ',' << i << ',' << z.centers(i, 0) << ',' << z.centers(i, 1) << ',' << z.centers(i, 2) << ','
          << z.radii[static_cast<size_t>(i)] << '\n';
    }
  }
}

}  // namespace mdmp
