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

#include "mdmp/kinematics.hpp"

#include "mdmp/errors.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>

namespace mdmp {

using Eigen::Index;

void JointTree::validate() const {
  const int J = joint_count();
  MDMP_CHECK_ARG(J >= 1, "joint tree is empty");
  MDMP_CHECK_ARG(offsets.rows() == J && offsets.cols() == 3, "joint tree offsets must be J x 3");
  MDMP_CHECK_ARG(parents[0] == -1, "joint 0 must be the root (parent -1)");
  for (int j = 1; j < J; ++j) {
    MDMP_CHECK_ARG(parents[static_cast<size_t>(j)] >= 0 && parents[static_cast<size_t>(j)] < j,
                   "joint " + std::to_string(j) + " must have a parent with a smaller index");
  }
  MDMP_CHECK_ARG(names.empty() || static_cast<int>(names.size()) == J, "joint names must match the joint count");
}

JointTree JointTree::toy_skeleton() {
  JointTree t;
  t.parents = {-1, 0, 1, 1, 3};
  t.offsets.resize(5, 3);
  t.offsets << 0.0, 0.0, 0.0,   // pelvis
      0.0, 0.35, 0.0,           // chest
      0.0, 0.30, 0.0,           // head
      -0.20, 0.0, 0.0,          // right shoulder
      0.0, -0.55, 0.0;          // right hand
  t.names = {"pelvis", "chest", "head", "right_shoulder", "right_hand"};
  return t;
}

JointTree JointTree::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open joint tree " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (!j.contains("parents") || !j.contains("offsets") || !j["parents"].is_array() || !j["offsets"].is_array()) {
    throw FormatError(path + ": joint tree needs 'parents' and 'offsets' arrays");
  }
  JointTree t;
  try {
    t.parents = j["parents"].get<std::vector<int>>();
    const auto offs = j["offsets"].get<std::vector<std::vector<double>>>();
    t.offsets.resize(static_cast<Index>(offs.size()), 3);
    for (size_t r = 0; r < offs.size(); ++r) {
      if (offs[r].size() != 3) throw FormatError(path + ": each offset needs 3 coordinates");
      for (Index c = 0; c < 3; ++c) t.offsets(static_cast<Index>(r), c) = offs[r][static_cast<size_t>(c)];
    }
    if (j.contains("names")) t.names = j["names"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (t.offsets.rows() != t.joint_count()) throw FormatError(path + ": parents and offsets differ in length");
  try {
    t.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(path + ": " + e.what());
  }
  return t;
}

void JointTree::save(const std::string& path) const {
  nlohmann::json j;
  j["parents"] = parents;
  std::vector<std::vector<double>> offs;
  for (Index r = 0; r < offsets.rows(); ++r) offs.push_back({offsets(r, 0), offsets(r, 1), offsets(r, 2)});
  j["offsets"] = offs;
  if (!names.empty()) j["names"] = names;
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << j.dump(2) << '\n';
}

std::vector<int> PoseLayout::joint_map() const {
  std::vector<int> map(static_cast<size_t>(width()), -1);
  for (int i = 0; i < local_positions(); ++i) map[static_cast<size_t>(i)] = 0;
  for (int j = 1; j < joints; ++j) {
    for (int c = 0; c < 3; ++c) map[static_cast<size_t>(local_positions() + (j - 1) * 3 + c)] = j;
    for (int c = 0; c < 6; ++c) map[static_cast<size_t>(rotations() + (j - 1) * 6 + c)] = j;
  }
  for (int j = 0; j < joints; ++j) {
    for (int c = 0; c < 3; ++c) map[static_cast<size_t>(velocities() + j * 3 + c)] = j;
  }
  return map;
}

std::vector<int> positions_joint_map(int joints) {
  std::vector<int> map(static_cast<size_t>(joints) * 3);
  for (size_t i = 0; i < map.size(); ++i) map[i] = static_cast<int>(i / 3);
  return map;
}

Quaternion yaw_quaternion(double yaw) { return Quaternion(std::cos(0.5 * yaw), 0.0, std::sin(0.5 * yaw), 0.0); }

Mat3 yaw_matrix(double yaw) {
  Mat3 m;
  const double c = std::cos(yaw), s = std::sin(yaw);
  m << c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c;
  return m;
}

RootTrajectory recover_root(const Matrix& seq, const PoseLayout& layout) {
  MDMP_CHECK_ARG(seq.cols() == layout.width(), "recover_root: sequence has " + std::to_string(seq.cols()) +
                                                   " features, layout expects " + std::to_string(layout.width()));
  const Index N = seq.rows();
  RootTrajectory root;
  root.yaw.resize(static_cast<size_t>(N));
  root.rotation.resize(static_cast<size_t>(N));
  root.position = Matrix::Zero(N, 3);
  double yaw = 0.0;
  Vec3 xz = Vec3::Zero();
  for (Index i = 0; i < N; ++i) {
    root.yaw[static_cast<size_t>(i)] = yaw;
    root.rotation[static_cast<size_t>(i)] = yaw_quaternion(yaw);
    root.position(i, 0) = xz.x();
    root.position(i, 1) = seq(i, layout.root_height());
    root.position(i, 2) = xz.z();
    const Vec3 local_vel(seq(i, layout.root_linear_vel()), 0.0, seq(i, layout.root_linear_vel() + 1));
    xz += yaw_matrix(yaw) * local_vel;
    yaw += seq(i, layout.root_angular_vel());
  }
  return root;
}

Mat3 rot6d_to_matrix(const Rot6d& r) {
  const Vec3 a1 = r.head<3>();
  const Vec3 a2 = r.tail<3>();
  constexpr double kTiny = 1e-8;
  if (a1.norm() < kTiny || a2.norm() < kTiny) throw NumericalError("rot6d: vector norm below 1e-8");
  const Vec3 b1 = a1.normalized();
  const Vec3 ortho = a2 - b1.dot(a2) * b1;
  if (ortho.norm() < kTiny * a2.norm()) throw NumericalError("rot6d: columns are parallel");
  const Vec3 b2 = ortho.normalized();
  Mat3 m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b1.cross(b2);
  return m;
}

Rot6d matrix_to_rot6d(const Mat3& m) {
  Rot6d r;
  r.head<3>() = m.col(0);
  r.tail<3>() = m.col(1);
  return r;
}

Matrix forward_kinematics(const std::vector<Mat3>& local_rotations, const Mat3& root_rotation,
                          const Vec3& root_position, const JointTree& tree) {
  tree.validate();
  const int J = tree.joint_count();
  MDMP_CHECK_ARG(static_cast<int>(local_rotations.size()) == J - 1,
                 "forward_kinematics: need one rotation per non-root joint");
  std::vector<Mat3> global(static_cast<size_t>(J));
  Matrix pos(J, 3);
  global[0] = root_rotation;
  pos.row(0) = root_position.transpose();
  for (int j = 1; j < J; ++j) {
    const auto p = static_cast<size_t>(tree.parents[static_cast<size_t>(j)]);
    const Vec3 offset = tree.offsets.row(j).transpose();
    pos.row(j) = pos.row(static_cast<Index>(p)) + (global[p] * offset).transpose();
    global[static_cast<size_t>(j)] = global[p] * local_rotations[static_cast<size_t>(j - 1)];
  }
  return pos;
}

MotionTensor features_to_positions(const MotionTensor& seq, const JointTree& tree) {
  tree.validate();
  const PoseLayout layout{tree.joint_count()};
  MDMP_CHECK_ARG(seq.layout != Layout::kPositions3d, "features_to_positions: input is already positions");
  const RootTrajectory root = recover_root(seq.data, layout);
  const int J = tree.joint_count();
  Matrix out(seq.frames(), 3 * J);
  std::vector<Mat3> local(static_cast<size_t>(J - 1));
  for (Index i = 0; i < seq.frames(); ++i) {
    for (int j = 1; j < J; ++j) {
      const Rot6d r = seq.data.row(i).segment<6>(layout.rotations() + (j - 1) * 6).transpose();
      local[static_cast<size_t>(j - 1)] = rot6d_to_matrix(r);
    }
    const Matrix p = forward_kinematics(local, yaw_matrix(root.yaw[static_cast<size_t>(i)]),
                                        root.position.row(i).transpose(), tree);
    out.row(i) = Eigen::Map<const RowVector>(p.data(), 3 * J);
  }
  return MotionTensor(std::move(out), seq.fps, Layout::kPositions3d);
}

}  // namespace mdmp
