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
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace mdmp;
namespace fs = std::filesystem;

TEST_CASE("container round trip is exact for float-representable data") {
  const Matrix d = round_to_float(Rng(1).normal_matrix(7, 9));
  const MotionTensor m(d, 30.0, Layout::kPositions3d);
  write_container("test_data.mdmp", m);
  const MotionTensor back = read_container("test_data.mdmp");
  CHECK(back.data == d);
  CHECK(back.fps == 30.0);
  CHECK(back.layout == Layout::kPositions3d);
  CHECK(encode_container(back) == encode_container(m));
  CHECK(fs::file_size("test_data.mdmp") == 24 + 7 * 9 * 4);
}

TEST_CASE("container header is little endian") {
  const auto bytes = encode_container(MotionTensor(Matrix::Zero(2, 3), 20.0, Layout::kRaw));
  REQUIRE(bytes.size() == 24 + 24);
  CHECK(bytes[4] == 1);  // version
  CHECK(bytes[8] == 2);  // frames
  CHECK(bytes[12] == 3);  // features
  // 20.0f == 0x41a00000
  CHECK(bytes[16] == 0x00);
  CHECK(bytes[19] == 0x41);
  CHECK(bytes[18] == 0xa0);
}

TEST_CASE("empty sequences are allowed") {
  const MotionTensor m(Matrix(0, 6), 20.0, Layout::kPositions3d);
  const MotionTensor back = decode_container(encode_container(m));
  CHECK(back.frames() == 0);
  CHECK(back.features() == 6);
}

TEST_CASE("container decoding rejects malformed input") {
  const auto good = encode_container(MotionTensor(Matrix::Ones(2, 3), 20.0, Layout::kPositions3d));
  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_container(bad), FormatError);
  bad = good;
  bad[4] = 2;
  CHECK_THROWS_AS(decode_container(bad), FormatError);
  bad = good;
  bad.pop_back();
  CHECK_THROWS_AS(decode_container(bad), FormatError);
  bad = good;
  bad[20] = 3;
  CHECK_THROWS_AS(decode_container(bad), FormatError);
  bad = good;
  bad[19] = 0xc1;  // negative fps
  CHECK_THROWS_AS(decode_container(bad), FormatError);
  CHECK_THROWS_AS(decode_container({good.begin(), good.begin() + 10}), FormatError);
  // humanml layout needs 263 features.
  bad = encode_container(MotionTensor(Matrix::Ones(2, 3), 20.0, Layout::kRaw));
  bad[20] = 1;
  CHECK_THROWS_AS(decode_container(bad), FormatError);
  CHECK_THROWS_AS(encode_container(MotionTensor(Matrix::Ones(2, 4), 20.0, Layout::kPositions3d)), InvalidArgument);
  CHECK_THROWS_AS(read_container("missing.mdmp"), FormatError);
  CHECK_NOTHROW(check_layout_width(Layout::kHumanMl263, 263));
}

TEST_CASE("prefix split and duration filter") {
  const MotionTensor m(Rng(2).normal_matrix(10, 3), 20.0, Layout::kPositions3d);
  const PrefixSplit s = split_prefix(m, 4);
  CHECK(s.prefix == m.data.topRows(4));
  CHECK(s.target == m.data);
  CHECK(split_prefix(m, 0).prefix.rows() == 0);
  CHECK_THROWS_AS(split_prefix(m, 10), InvalidArgument);
  CHECK_THROWS_AS(split_prefix(m, -1), InvalidArgument);

  std::vector<DatasetRecord> recs(3);
  recs[0].motion = MotionTensor(Matrix::Zero(40, 3), 20.0, Layout::kPositions3d);  // 2 s
  recs[1].motion = MotionTensor(Matrix::Zero(60, 3), 20.0, Layout::kPositions3d);  // 3 s
  recs[2].motion = MotionTensor(Matrix::Zero(61, 3), 20.0, Layout::kPositions3d);
  recs[0].id = "a";
  recs[1].id = "b";
  recs[2].id = "c";
  const auto kept = filter_min_duration(recs, 3.0);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].id == "c");
}

TEST_CASE("toy generator is deterministic and class balanced") {
  ToyGenConfig cfg;
  cfg.num_sequences = 12;
  cfg.seed = 5;
  const auto a = generate_toy_dataset(cfg);
  const auto b = generate_toy_dataset(cfg);
  REQUIRE(a.size() == 12);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].motion.data == b[i].motion.data);
    CHECK(a[i].prompts == std::vector<std::string>{default_toy_classes()[i % 4].prompt});
  }
  cfg.seed = 6;
  CHECK(generate_toy_dataset(cfg)[0].motion.data != a[0].motion.data);
  CHECK(a[0].motion.frames() == 120);
  CHECK(a[0].motion.features() == 15);
  CHECK(a[3].id == "toy_3");
}

TEST_CASE("toy motions respect the skeleton and close their circles") {
  ToyGenConfig cfg;
  cfg.num_sequences = 16;
  cfg.seed = 7;
  const auto motions = generate_toy_motions(cfg);
  const JointTree& tree = cfg.tree;
  for (const auto& m : motions) {
    const Matrix& P = m.record.motion.data;
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      for (int j = 1; j < tree.joint_count(); ++j) {
        const int p = tree.parents[static_cast<size_t>(j)];
        const double bone = (P.row(i).segment<3>(3 * j) - P.row(i).segment<3>(3 * p)).norm();
        CHECK(std::abs(bone - tree.offsets.row(j).norm()) < 1e-5);
      }
    }
    const ToyAction action = cfg.classes[static_cast<size_t>(m.class_index)].action;
    const bool walking = action == ToyAction::kCircleClockwise || action == ToyAction::kCircleCounterclockwise;
    if (walking) {
      double length = 0.0;
      for (Eigen::Index i = 1; i < P.rows(); ++i) length += (P.row(i).head<3>() - P.row(i - 1).head<3>()).norm();
      const double gap = (P.row(P.rows() - 1).head<3>() - P.row(0).head<3>()).norm();
      CHECK(gap < 0.05 * length);
      // Heading change sign identifies the direction.
      const double turn = m.yaw.back() - m.yaw.front();
      CHECK((action == ToyAction::kCircleClockwise ? turn < 0.0 : turn > 0.0));
    } else if (action == ToyAction::kWalkForward) {
      // At rest through the prefix, then displaced along the initial facing direction.
      const Eigen::Index last = P.rows() - 1;
      CHECK((P.row(cfg.prefix_len - 1).head<3>() - P.row(0).head<3>()).norm() < 1e-6);
      const Vec3 moved = (P.row(last).head<3>() - P.row(0).head<3>()).transpose();
      const Vec3 facing = yaw_matrix(m.yaw.front()) * Vec3(0.0, 0.0, 1.0);
      CHECK(moved.norm() > 0.5);
      CHECK(moved.normalized().dot(facing) > 1.0 - 1e-6);
      CHECK(std::abs(P(last, 13) - P(0, 13)) < 1e-6);
    } else {
      // The hand stays at rest through the prefix and rises afterwards.
      const double rest_y = P(0, 13);
      CHECK(std::abs(P(cfg.prefix_len - 1, 13) - rest_y) < 1e-6);
      CHECK(P(P.rows() - 1, 13) > rest_y + 0.5);
    }
    CHECK(std::abs(P(0, 1) - 1.0) < 1e-6);
  }
}

TEST_CASE("manifest round trip resolves relative paths") {
  ToyGenConfig cfg;
  cfg.num_sequences = 3;
  const auto recs = generate_toy_dataset(cfg);
  fs::remove_all("test_data_manifest");
  write_manifest("test_data_manifest", recs);
  const auto back = read_manifest("test_data_manifest/manifest.json");
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back[i].id == recs[i].id);
    CHECK(back[i].prompts == recs[i].prompts);
    CHECK(back[i].motion.data == recs[i].motion.data);
  }
  auto write = [](const std::string& text) {
    std::ofstream("test_data_manifest/bad.json") << text;
    return std::string("test_data_manifest/bad.json");
  };
  CHECK_THROWS_AS(read_manifest(write("[")), FormatError);
  CHECK_THROWS_AS(read_manifest(write(R"({"x": 1})")), FormatError);
  CHECK_THROWS_AS(read_manifest(write(R"({"records": [{"id": "a", "motion_path": "motions/toy_0.mdmp", "prompts": []}]})")),
                  FormatError);
  CHECK_THROWS_AS(read_manifest(write(R"({"records": [
      {"id": "a", "motion_path": "motions/toy_0.mdmp", "prompts": ["p"]},
      {"id": "a", "motion_path": "motions/toy_1.mdmp", "prompts": ["p"]}]})")),
                  FormatError);
  CHECK_THROWS_AS(read_manifest(write(R"({"records": [{"id": "a", "motion_path": "nope.mdmp", "prompts": ["p"]}]})")),
                  FormatError);
}

TEST_CASE("normalizer fits population statistics") {
  Rng rng(8);
  std::vector<Matrix> seqs{rng.normal_matrix(5, 3), rng.normal_matrix(7, 3)};
  seqs[0].col(2).setConstant(4.0);
  seqs[1].col(2).setConstant(4.0);
  const Normalizer n = Normalizer::fit(seqs);
  for (int f = 0; f < 2; ++f) {
    std::vector<double> v;
    for (const auto& s : seqs)
      for (Eigen::Index i = 0; i < s.rows(); ++i) v.push_back(s(i, f));
    CHECK(n.std(f) == doctest::Approx(oracle::two_pass_std(v)).epsilon(1e-12));
  }
  CHECK(n.std(2) == 1.0);
  CHECK(n.mean(2) == 4.0);
  const Matrix z = n.normalize(seqs[0]);
  CHECK((n.denormalize(z) - seqs[0]).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(Normalizer::identity(3).normalize(seqs[0]) == seqs[0]);
  CHECK_THROWS_AS((void)n.normalize(Matrix::Zero(2, 4)), InvalidArgument);
  CHECK_THROWS_AS(Normalizer::fit({}), InvalidArgument);
}
