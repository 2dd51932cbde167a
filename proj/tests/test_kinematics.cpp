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
#include "oracles.hpp"

#include "mdmp/data.hpp"
#include "mdmp/errors.hpp"
#include "mdmp/kinematics.hpp"
#include "mdmp/rng.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

using namespace mdmp;

namespace {

Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q.normalized().toRotationMatrix();
}

}  // namespace

TEST_CASE("yaw convention turns +Z towards +X") {
  const Vec3 v = yaw_matrix(std::numbers::pi / 2) * Vec3::UnitZ();
  CHECK((v - Vec3::UnitX()).norm() < 1e-15);
  const Mat3 r = yaw_matrix(0.3);
  CHECK(r(0, 2) == doctest::Approx(std::sin(0.3)));
  CHECK(r(2, 0) == doctest::Approx(-std::sin(0.3)));
  CHECK((yaw_quaternion(0.7).toRotationMatrix() - yaw_matrix(0.7)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("rot6d round trip and Gram-Schmidt") {
  Rng rng(1);
  for (int k = 0; k < 100; ++k) {
    const Mat3 m = random_rotation(rng);
    CHECK((rot6d_to_matrix(matrix_to_rot6d(m)) - m).cwiseAbs().maxCoeff() < 1e-12);
  }
  for (int k = 0; k < 100; ++k) {
    Rot6d r;
    for (int i = 0; i < 6; ++i) r(i) = rng.normal();
    const Mat3 m = rot6d_to_matrix(r);
    CHECK((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(m.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    // First column is the normalized first vector.
    CHECK((m.col(0) - r.head<3>().normalized()).norm() < 1e-12);
  }
  Rot6d zero = Rot6d::Zero();
  zero.tail<3>() = Vec3::UnitY();
  CHECK_THROWS_AS(rot6d_to_matrix(zero), NumericalError);
  Rot6d parallel;
  parallel << 1, 0, 0, 2, 0, 0;
  CHECK_THROWS_AS(rot6d_to_matrix(parallel), NumericalError);
  Rot6d tiny;
  tiny << 1e-9, 0, 0, 0, 1, 0;
  CHECK_THROWS_AS(rot6d_to_matrix(tiny), NumericalError);
}

TEST_CASE("forward kinematics agrees with quaternion composition") {
  const JointTree tree = JointTree::toy_skeleton();
  Rng rng(2);
  for (int k = 0; k < 50; ++k) {
    std::vector<Mat3> local;
    std::vector<Eigen::Quaterniond> qlocal;
    for (int j = 1; j < tree.joint_count(); ++j) {
      local.push_back(random_rotation(rng));
      qlocal.emplace_back(local.back());
    }
    const Mat3 root = random_rotation(rng);
    const Vec3 pos(rng.normal(), rng.normal(), rng.normal());
    const Matrix got = forward_kinematics(local, root, pos, tree);
    const Matrix want = oracle::fk_quaternion(qlocal, Eigen::Quaterniond(root), pos, tree);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
    for (int j = 1; j < tree.joint_count(); ++j) {
      const double bone = (got.row(j) - got.row(tree.parents[static_cast<size_t>(j)])).norm();
      CHECK(bone == doctest::Approx(tree.offsets.row(j).norm()).epsilon(1e-12));
    }
  }
}

TEST_CASE("pose layout widths") {
  CHECK(PoseLayout{22}.width() == 263);
  CHECK(PoseLayout{5}.width() == 59);
  const auto map = PoseLayout{22}.joint_map();
  REQUIRE(map.size() == 263);
  CHECK(map[0] == 0);
  CHECK(map[259] == -1);
  CHECK(map[PoseLayout{22}.local_positions()] == 1);
  CHECK(map[PoseLayout{22}.velocities() + 3 * 21] == 21);
  CHECK(positions_joint_map(3) == std::vector<int>{0, 0, 0, 1, 1, 1, 2, 2, 2});
}

TEST_CASE("root recovery integrates a unicycle with forward Euler") {
  const PoseLayout L{5};
  const int N = 40;
  Matrix seq = Matrix::Zero(N, L.width());
  const double w = 0.05, v = 0.03;
  for (int i = 0; i < N; ++i) {
    seq(i, L.root_angular_vel()) = w;
    seq(i, L.root_linear_vel() + 1) = v;
    seq(i, L.root_height()) = 0.9;
  }
  const RootTrajectory r = recover_root(seq, L);
  double yaw = 0.0, x = 0.0, z = 0.0;
  for (int i = 0; i < N; ++i) {
    CHECK(r.yaw[static_cast<size_t>(i)] == doctest::Approx(yaw).epsilon(1e-14));
    CHECK(std::abs(r.position(i, 0) - x) < 1e-12);
    CHECK(std::abs(r.position(i, 2) - z) < 1e-12);
    CHECK(r.position(i, 1) == 0.9);
    x += v * std::sin(yaw);
    z += v * std::cos(yaw);
    yaw += w;
  }
  CHECK_THROWS_AS(recover_root(Matrix::Zero(3, 10), L), InvalidArgument);
}

TEST_CASE("features to positions inverts the feature encoding of toy motions") {
  ToyGenConfig cfg;
  cfg.num_sequences = 8;
  cfg.seed = 3;
  const auto motions = generate_toy_motions(cfg);
  for (const auto& m : motions) {
    const Matrix feats = oracle::encode_pose_features(m, cfg.tree);
    const MotionTensor pos = features_to_positions(MotionTensor(feats, cfg.fps, Layout::kRaw), cfg.tree);
    CHECK(pos.layout == Layout::kPositions3d);
    CHECK((pos.data - oracle::canonical_positions(m)).cwiseAbs().maxCoeff() < 1e-4);
  }
  CHECK_THROWS_AS(features_to_positions(motions[0].record.motion, cfg.tree), InvalidArgument);
}

TEST_CASE("joint trees validate, save and load") {
  const JointTree t = JointTree::toy_skeleton();
  t.save("test_kinematics_tree.json");
  const JointTree u = JointTree::load("test_kinematics_tree.json");
  CHECK(u.parents == t.parents);
  CHECK(u.offsets == t.offsets);
  CHECK(u.names == t.names);

  JointTree bad = t;
  bad.parents[2] = 3;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = t;
  bad.parents[0] = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);

  auto write = [](const char* text) {
    std::ofstream("test_kinematics_bad.json") << text;
    return std::string("test_kinematics_bad.json");
  };
  CHECK_THROWS_AS(JointTree::load(write("{")), FormatError);
  CHECK_THROWS_AS(JointTree::load(write(R"({"parents": [-1]})")), FormatError);
  CHECK_THROWS_AS(JointTree::load(write(R"({"parents": [-1, 0], "offsets": [[0, 0, 0]]})")), FormatError);
  CHECK_THROWS_AS(JointTree::load(write(R"({"parents": [-1], "offsets": [[0, 0]]})")), FormatError);
  CHECK_THROWS_AS(JointTree::load("missing_tree.json"), FormatError);
}
