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

// Pose-feature transform: recovers global joint positions from the
// root-velocity / 6D-rotation pose representation.
//
// Conventions: +Y is up. Yaw is a rotation about +Y; a positive yaw turns the
// local forward axis +Z towards +X. Root velocities are integrated with forward
// Euler: the velocity stored at frame i moves the root from frame i to i + 1.

#pragma once

#include "mdmp/tensor.hpp"

#include <Eigen/Geometry>

#include <string>
#include <vector>

namespace mdmp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quaternion = Eigen::Quaterniond;
using Rot6d = Eigen::Matrix<double, 6, 1>;

struct JointTree {
  std::vector<int> parents;  // parents[0] == -1
  Matrix offsets;            // J x 3, bone vector from the parent in the rest pose (meters)
  std::vector<std::string> names;  // optional

  [[nodiscard]] int joint_count() const { return static_cast<int>(parents.size()); }
  // Throws InvalidArgument unless parents form a topologically ordered tree rooted at 0.
  void validate() const;

  // Five-joint toy skeleton: pelvis, chest, head, right shoulder, right hand.
  static JointTree toy_skeleton();
  static JointTree load(const std::string& path);  // {"parents": [...], "offsets": [[x,y,z], ...]}
  void save(const std::string& path) const;
};

// Offsets of the contiguous feature blocks for a J-joint skeleton.
struct PoseLayout {
  int joints = 22;

  [[nodiscard]] int root_angular_vel() const { return 0; }
  [[nodiscard]] int root_linear_vel() const { return 1; }
  [[nodiscard]] int root_height() const { return 3; }
  [[nodiscard]] int local_positions() const { return 4; }
  [[nodiscard]] int rotations() const { return local_positions() + (joints - 1) * 3; }
  [[nodiscard]] int velocities() const { return rotations() + (joints - 1) * 6; }
  [[nodiscard]] int foot_contacts() const { return velocities() + joints * 3; }
  [[nodiscard]] int width() const { return foot_contacts() + 4; }

  // Feature index -> joint id; root channels map to joint 0 and foot
  // contacts map to -1 (not associated with a joint).
  [[nodiscard]] std::vector<int> joint_map() const;
};

struct RootTrajectory {
  std::vector<double> yaw;              // radians, per frame
  std::vector<Quaternion> rotation;     // yaw quaternion per frame
  Matrix position;                      // N x 3
};

RootTrajectory recover_root(const Matrix& seq, const PoseLayout& layout);

Quaternion yaw_quaternion(double yaw);
Mat3 yaw_matrix(double yaw);

// Gram-Schmidt on the two stored columns. Throws NumericalError when either
// vector is shorter than 1e-8 or they are parallel.
Mat3 rot6d_to_matrix(const Rot6d& r);
Rot6d matrix_to_rot6d(const Mat3& m);

// local_rotations[j - 1] is the rotation of joint j relative to its parent.
// Returns J x 3 global positions.
Matrix forward_kinematics(const std::vector<Mat3>& local_rotations, const Mat3& root_rotation,
                          const Vec3& root_position, const JointTree& tree);

// Full pose-feature sequence -> J*3 global positions per frame.
MotionTensor features_to_positions(const MotionTensor& seq, const JointTree& tree);

// Feature index -> joint id for a J*3 position layout.
std::vector<int> positions_joint_map(int joints);

}  // namespace mdmp
