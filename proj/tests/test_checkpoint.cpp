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
#include "gradcheck.hpp"

#include "mdmp/checkpoint.hpp"
#include "mdmp/errors.hpp"

#include <cstring>
#include <fstream>

using namespace mdmp;

namespace {

Checkpoint make_checkpoint() {
  Checkpoint c;
  c.model = gradcheck::tiny_config();
  c.train.steps = 7;
  c.train.prefix_len = 3;
  c.train.learning_rate = 5e-4;
  c.train.T = 50;
  c.frames = 8;
  c.fps = 20.0;
  c.layout = Layout::kRaw;
  c.text_encoder = "stub";
  c.normalizer = Normalizer::identity(6);
  c.normalizer.mean(1) = 0.25;
  c.normalizer.std(2) = 3.0;
  Denoiser d(c.model, 4);
  c.params = d.params();
  // Parameters are stored as float32.
  for (int i = 0; i < c.params.size(); ++i) c.params.value(i) = round_to_float(c.params.value(i));
  return c;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  const Checkpoint c = make_checkpoint();
  const auto bytes = encode_checkpoint(c);
  CHECK(std::memcmp(bytes.data(), "MDMPCKPT", 8) == 0);
  const Checkpoint d = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(d) == bytes);
  CHECK(d.frames == 8);
  CHECK(d.train.steps == 7);
  CHECK(d.train.learning_rate == 5e-4);
  CHECK(d.model.latent_dim == 16);
  CHECK(d.model.learn_variance);
  CHECK(d.normalizer.mean == c.normalizer.mean);
  CHECK(d.normalizer.std == c.normalizer.std);
  REQUIRE(d.params.size() == c.params.size());
  for (int i = 0; i < c.params.size(); ++i) {
    CHECK(d.params.name(i) == c.params.name(i));
    CHECK(d.params.value(i) == c.params.value(i));
  }
}

TEST_CASE("a loaded checkpoint reproduces the forward pass") {
  const Checkpoint c = make_checkpoint();
  save_checkpoint("test_checkpoint.ckpt", c);
  const Checkpoint d = load_checkpoint("test_checkpoint.ckpt");
  const Denoiser a(c.model, c.params), b(d.model, d.params);
  const auto p = gradcheck::tiny_problem(5, 1);
  const auto oa = a.forward(p.x0, 5, p.cond);
  const auto ob = b.forward(p.x0, 5, p.cond);
  CHECK(oa.x0_hat == ob.x0_hat);
  CHECK(oa.v0 == ob.v0);
}

TEST_CASE("checkpoint decoding rejects malformed input") {
  const auto good = encode_checkpoint(make_checkpoint());
  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = good;
  bad.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = good;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  CHECK_THROWS_AS(decode_checkpoint({good.begin(), good.begin() + 12}), FormatError);
  bad = good;
  bad[16] = '!';  // corrupts the JSON header
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  CHECK_THROWS_AS(load_checkpoint("missing.ckpt"), FormatError);

  Checkpoint c = make_checkpoint();
  c.params.value(0)(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(encode_checkpoint(c), NumericalError);
}
