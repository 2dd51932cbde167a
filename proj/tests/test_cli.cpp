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

#include "mdmp/data.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const std::string kCli = MDMP_CLI_PATH;
const fs::path kWork = fs::absolute("test_cli_work");

int run(const std::string& args, const std::string& log = "last.log") {
  const std::string cmd = "cd '" + kWork.string() + "' && '" + kCli + "' " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shared tiny dataset and model; built once.
void prepare() {
  static bool done = false;
  if (done) return;
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  std::ofstream(kWork / "tiny.json")
      << R"({"model": {"latent_dim": 16, "layers": 1, "heads": 2, "ff_dim": 32, "gcn_hidden": 8},
            "batch_size": 4, "steps": 4, "T": 10, "learning_rate": 1e-3})";
  REQUIRE(run("gen-toy --out toy --train 8 --test 2 --seed 1") == 0);
  REQUIRE(run("train --config tiny.json --dataset toy/train/manifest.json --checkpoint m.ckpt --loss-csv a.csv") == 0);
  done = true;
}

}  // namespace

TEST_CASE("gen-toy writes manifests and a skeleton") {
  prepare();
  CHECK(fs::exists(kWork / "toy/train/manifest.json"));
  CHECK(fs::exists(kWork / "toy/test/motions/toy_test_1.mdmp"));
  CHECK(fs::exists(kWork / "toy/skeleton.json"));
  CHECK(mdmp::read_manifest((kWork / "toy/train/manifest.json").string()).size() == 8);
}

TEST_CASE("training is reproducible from the command line") {
  prepare();
  REQUIRE(run("train --config tiny.json --dataset toy/train/manifest.json --checkpoint m2.ckpt --loss-csv b.csv") == 0);
  CHECK(slurp(kWork / "a.csv") == slurp(kWork / "b.csv"));
  CHECK(slurp(kWork / "m.ckpt") == slurp(kWork / "m2.ckpt"));
  CHECK(slurp(kWork / "a.csv").rfind("step,L_simple,L_VLB,L_hybrid", 0) == 0);
}

TEST_CASE("usage and configuration errors exit with 2") {
  prepare();
  CHECK(run("train --dataset missing.json --checkpoint z.ckpt") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("sample --checkpoint m.ckpt --out s") == 2);  // neither --prefix nor --manifest
  std::ofstream(kWork / "bad.json") << R"({"unknown_key": 1})";
  CHECK(run("train --config bad.json --dataset toy/train/manifest.json --checkpoint z.ckpt") == 2);
}

TEST_CASE("numerical failure exits with 3") {
  prepare();
  CHECK(run("train --config tiny.json --dataset toy/train/manifest.json --checkpoint z.ckpt --lr 1e200") == 3);
}

TEST_CASE("a single chain warns and skips mode divergence") {
  prepare();
  CHECK(run("sample --checkpoint m.ckpt --prefix toy/test/motions/toy_test_0.mdmp --prompt wave --chains 1 --out s1",
            "s1.log") == 0);
  CHECK(slurp(kWork / "s1.log").find("warning") != std::string::npos);
  CHECK_FALSE(fs::exists(kWork / "s1/mode_divergence.csv"));
  CHECK(fs::exists(kWork / "s1/denoising_fluctuations.csv"));
}

TEST_CASE("zero guidance matches the text-masked sampler") {
  prepare();
  const std::string base = "sample --checkpoint m.ckpt --prefix toy/test/motions/toy_test_0.mdmp --chains 2 --seed 4 ";
  REQUIRE(run(base + "--prompt 'raise the right hand' --guidance 0 --out g0") == 0);
  REQUIRE(run(base + "--prompt 'raise the right hand' --no-text --out nt") == 0);
  CHECK(slurp(kWork / "g0/sample_0.mdmp") == slurp(kWork / "nt/sample_0.mdmp"));
  CHECK(slurp(kWork / "g0/sample_1.mdmp") == slurp(kWork / "nt/sample_1.mdmp"));
}

TEST_CASE("eval scores ground-truth copies as zero error") {
  prepare();
  REQUIRE(run("sample --checkpoint m.ckpt --manifest toy/test/manifest.json --chains 2 --out pred") == 0);
  for (const auto& rec : mdmp::read_manifest((kWork / "toy/test/manifest.json").string())) {
    mdmp::write_container((kWork / "pred" / rec.id / "prediction.mdmp").string(), rec.motion);
  }
  REQUIRE(run("eval --pred pred --gt toy/test/manifest.json --out ev --sparsification") == 0);
  std::ifstream in(kWork / "ev/mpjpe.csv");
  std::string line;
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    CHECK(std::stod(line.substr(a + 1, b - a - 1)) == 0.0);
    ++rows;
  }
  CHECK(rows == 7);
  CHECK(fs::exists(kWork / "ev/sparsification.csv"));
  CHECK(fs::exists(kWork / "ev/mpjpe.svg"));

  fs::rename(kWork / "pred/toy_test_1", kWork / "pred/other");
  CHECK(run("eval --pred pred --gt toy/test/manifest.json --out ev2", "ev2.log") == 2);
  CHECK(slurp(kWork / "ev2.log").find("toy_test_1") != std::string::npos);
}

TEST_CASE("plot renders a loss curve") {
  prepare();
  REQUIRE(run("plot --loss a.csv --out loss.svg") == 0);
  CHECK(slurp(kWork / "loss.svg").rfind("<svg", 0) == 0);
  CHECK(run("plot --out x.svg") == 2);
}
