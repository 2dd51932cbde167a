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

// Independent reference computations used only by the tests.
#pragma once

#include "mdmp/data.hpp"
#include "mdmp/kinematics.hpp"
#include "mdmp/tensor.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using mdmp::Matrix;

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline double central_difference(const std::function<double()>& f, double& x, double eps = 1e-5) {
  const double keep = x;
  x = keep + eps;
  const double up = f();
  x = keep - eps;
  const double down = f();
  x = keep;
  return (up - down) / (2.0 * eps);
}

// Relative error with an absolute floor so that near-zero gradients compare sanely.
inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Population std via the two-pass formula over a plain list.
inline double two_pass_std(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

// Bayes-rule posterior mean of x_{t-1} given x_t and x0: prior
// N(sqrt(abar_prev) x0, 1 - abar_prev) times likelihood N(x_t; sqrt(alpha) x_{t-1}, 1 - alpha).
inline double bayes_posterior_mean(double x_t, double x0, double alpha, double abar_prev) {
  const double prior_var = 1.0 - abar_prev;
  const double lik_var = 1.0 - alpha;
  const double precision = 1.0 / prior_var + alpha / lik_var;
  return (std::sqrt(abar_prev) * x0 / prior_var + std::sqrt(alpha) * x_t / lik_var) / precision;
}

// Global joint positions by composing unit quaternions down the tree.
inline Matrix fk_quaternion(const std::vector<Eigen::Quaterniond>& local, const Eigen::Quaterniond& root_rot,
                            const Eigen::Vector3d& root_pos, const mdmp::JointTree& tree) {
  const int J = tree.joint_count();
  std::vector<Eigen::Quaterniond> g(static_cast<size_t>(J));
  Matrix pos(J, 3);
  g[0] = root_rot;
  pos.row(0) = root_pos.transpose();
  for (int j = 1; j < J; ++j) {
    const int p = tree.parents[static_cast<size_t>(j)];
    const Eigen::Vector3d off = tree.offsets.row(j).transpose();
    const Eigen::Vector3d rotated = g[static_cast<size_t>(p)] * off;
    pos.row(j) = pos.row(p) + rotated.transpose();
    g[static_cast<size_t>(j)] = g[static_cast<size_t>(p)] * local[static_cast<size_t>(j - 1)];
  }
  return pos;
}

// Inverse construction: pose-feature encoding of a generated toy motion,
// following the PoseLayout block order. Foot contacts are left at zero.
inline Matrix encode_pose_features(const mdmp::ToyMotion& m, const mdmp::JointTree& tree) {
  const int J = tree.joint_count();
  const mdmp::PoseLayout L{J};
  const Eigen::Index N = m.root_position.rows();
  const Matrix& P = m.record.motion.data;
  Matrix f = Matrix::Zero(N, L.width());
  auto ry = [](double yaw) { return mdmp::yaw_matrix(yaw); };
  for (Eigen::Index i = 0; i < N; ++i) {
    const size_t si = static_cast<size_t>(i);
    const bool last = i + 1 == N;
    const double dyaw = last ? 0.0 : m.yaw[si + 1] - m.yaw[si];
    Eigen::Vector3d step = Eigen::Vector3d::Zero();
    if (!last) step = (m.root_position.row(i + 1) - m.root_position.row(i)).transpose();
    const Eigen::Vector3d local_step = ry(m.yaw[si]).transpose() * step;
    f(i, L.root_angular_vel()) = dyaw;
    f(i, L.root_linear_vel()) = local_step.x();
    f(i, L.root_linear_vel() + 1) = local_step.z();
    f(i, L.root_height()) = m.root_position(i, 1);
    const Eigen::Vector3d root = m.root_position.row(i).transpose();
    for (int j = 1; j < J; ++j) {
      const Eigen::Vector3d pj = P.row(i).segment<3>(3 * j).transpose();
      const Eigen::Vector3d rel = ry(m.yaw[si]).transpose() * (pj - root);
      f.row(i).segment<3>(L.local_positions() + 3 * (j - 1)) = rel.transpose();
      f.row(i).segment<6>(L.rotations() + 6 * (j - 1)) =
          mdmp::matrix_to_rot6d(m.local_rotations[si][static_cast<size_t>(j - 1)]).transpose();
    }
    for (int j = 0; j < J; ++j) {
      Eigen::Vector3d v = Eigen::Vector3d::Zero();
      if (!last) v = (P.row(i + 1).segment<3>(3 * j) - P.row(i).segment<3>(3 * j)).transpose();
      f.row(i).segment<3>(L.velocities() + 3 * j) = (ry(m.yaw[si]).transpose() * v).transpose();
    }
  }
  return f;
}

// Source positions expressed in the frame the feature decoder reconstructs
// into: start XZ at the origin and start yaw zero.
inline Matrix canonical_positions(const mdmp::ToyMotion& m) {
  const Matrix& P = m.record.motion.data;
  const Eigen::Matrix3d undo = mdmp::yaw_matrix(-m.yaw[0]);
  const Eigen::Vector3d origin(m.root_position(0, 0), 0.0, m.root_position(0, 2));
  Matrix out(P.rows(), P.cols());
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    for (Eigen::Index j = 0; j < P.cols() / 3; ++j) {
      const Eigen::Vector3d p = P.row(i).segment<3>(3 * j).transpose();
      out.row(i).segment<3>(3 * j) = (undo * (p - origin)).transpose();
    }
  return out;
}

}  // namespace oracle
