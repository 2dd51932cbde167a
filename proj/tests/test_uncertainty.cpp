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

#include "mdmp/errors.hpp"
#include "mdmp/rng.hpp"
#include "mdmp/uncertainty.hpp"

using namespace mdmp;

TEST_CASE("mode divergence is the population std averaged per joint") {
  Rng rng(1);
  std::vector<Matrix> samples;
  for (int s = 0; s < 5; ++s) samples.push_back(rng.normal_matrix(4, 6));
  const JointMap map = JointMap::from_features(positions_joint_map(2));
  const UncertaintyGrid g = mode_divergence(samples, map);
  REQUIRE(g.values.rows() == 4);
  REQUIRE(g.values.cols() == 2);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 2; ++j) {
      double acc = 0.0;
      for (int f = 3 * j; f < 3 * j + 3; ++f) {
        std::vector<double> v;
        for (const auto& s : samples) v.push_back(s(i, f));
        acc += oracle::two_pass_std(v);
      }
      CHECK(g.values(i, j) == doctest::Approx(acc / 3.0).epsilon(1e-12));
    }
  }
  CHECK(g.kind == UncertaintyKind::kModeDivergence);
  CHECK_THROWS_AS(mode_divergence({samples[0]}, map), InvalidArgument);
}

TEST_CASE("identical inputs give zero uncertainty") {
  const Matrix x = Rng(2).normal_matrix(3, 3);
  const JointMap map = JointMap::from_features({0, 0, 1});
  CHECK(mode_divergence({x, x, x}, map).values.cwiseAbs().maxCoeff() == 0.0);
  CHECK(denoising_fluctuations({x, x}, map, 2).values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("denoising fluctuations use only the last window") {
  Rng rng(3);
  std::vector<Matrix> snaps;
  for (int s = 0; s < 10; ++s) snaps.push_back(rng.normal_matrix(2, 2));
  const JointMap map = JointMap::from_features({0, 1});
  const UncertaintyGrid g = denoising_fluctuations(snaps, map, 4);
  std::vector<Matrix> tail(snaps.end() - 4, snaps.end());
  CHECK((g.values - mode_divergence(tail, map).values).cwiseAbs().maxCoeff() == 0.0);
  // Changing early snapshots has no effect.
  snaps[0].setConstant(100.0);
  CHECK(denoising_fluctuations(snaps, map, 4).values == g.values);
  CHECK_THROWS_AS(denoising_fluctuations(snaps, map, 11), InvalidArgument);
  CHECK_THROWS_AS(denoising_fluctuations(snaps, map, 0), InvalidArgument);
}

TEST_CASE("predicted variance and joint aggregation") {
  Matrix var(2, 4);
  var << 1, 3, 5, 7, 2, 4, 6, 8;
  const JointMap map = JointMap::from_features({0, 0, 1, -1});
  const UncertaintyGrid g = predicted_variance(var, map);
  CHECK(g.values(0, 0) == 2.0);
  CHECK(g.values(0, 1) == 5.0);
  CHECK(g.values(1, 1) == 6.0);
  CHECK_THROWS_AS(predicted_variance(Matrix(), map), UnsupportedConfiguration);
  CHECK_THROWS_AS(aggregate_by_joint(Matrix::Zero(2, 3), map), InvalidArgument);
}

TEST_CASE("presence zones scale the grid around joint positions") {
  const Matrix pos = Rng(4).normal_matrix(3, 9);
  UncertaintyGrid g;
  g.values = Matrix::Constant(3, 3, 0.1);
  g.values(1, 2) = 0.4;
  const auto zones = presence_zones(pos, g, {2, 0}, 2.0);
  REQUIRE(zones.size() == 2);
  CHECK(zones[0].joint == 2);
  CHECK(zones[0].centers == pos.middleCols(6, 3));
  CHECK(zones[0].radii[1] == doctest::Approx(0.8));
  CHECK(zones[1].radii[0] == doctest::Approx(0.2));
  CHECK_THROWS_AS(presence_zones(pos, g, {3}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(presence_zones(pos, g, {0}, -1.0), InvalidArgument);
}

TEST_CASE("grid CSV round trip") {
  UncertaintyGrid g;
  g.values = Rng(5).uniform_matrix(4, 3, 0.0, 1.0);
  g.kind = UncertaintyKind::kDenoisingFluctuations;
  write_grid_csv("test_uncertainty_grid.csv", g);
  const UncertaintyGrid h = read_grid_csv("test_uncertainty_grid.csv", g.kind);
  CHECK(h.values == g.values);
  CHECK(uncertainty_from_string("mode") == UncertaintyKind::kModeDivergence);
  CHECK(uncertainty_from_string("fluct") == UncertaintyKind::kDenoisingFluctuations);
  CHECK(uncertainty_from_string("predicted_variance") == UncertaintyKind::kPredictedVariance);
  CHECK_THROWS_AS(uncertainty_from_string("entropy"), InvalidArgument);
  CHECK_THROWS_AS(read_grid_csv("missing.csv", g.kind), FormatError);
}
