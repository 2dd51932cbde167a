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

#include "mdmp/data.hpp"

#include "mdmp/errors.hpp"
#include "mdmp/rng.hpp"

#include "json.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>

namespace mdmp {

using Eigen::Index;
namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'M', 'D', 'M', 'P'};
constexpr size_t kHeaderBytes = 24;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + static_cast<size_t>(i)]) << (8 * i);
  return v;
}

double smoothstep(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return u * u * (3.0 - 2.0 * u);
}

Mat3 rot_z(double a) {
  Mat3 m;
  const double c = std::cos(a), s = std::sin(a);
  m << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return m;
}

}  // namespace

void check_layout_width(Layout layout, Index width) {
  switch (layout) {
    case Layout::kRaw: return;
    case Layout::kHumanMl263:
      MDMP_CHECK_ARG(width == PoseLayout{22}.width(),
                     "humanml-263 layout needs 263 features, got " + std::to_string(width));
      return;
    case Layout::kPositions3d:
      MDMP_CHECK_ARG(width > 0 && width % 3 == 0,
                     "positions-3d layout needs a positive multiple of 3 features, got " + std::to_string(width));
      return;
  }
  throw InvalidArgument("unknown layout tag");
}

Matrix round_to_float(const Matrix& m) { return m.cast<float>().cast<double>(); }

std::vector<std::uint8_t> encode_container(const MotionTensor& motion) {
  check_layout_width(motion.layout, motion.features());
  MDMP_CHECK_ARG(std::isfinite(motion.fps) && motion.fps > 0.0, "container fps must be positive");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.reserve(kHeaderBytes + static_cast<size_t>(motion.data.size()) * 4);
  put_u32(out, kContainerVersion);
  put_u32(out, static_cast<std::uint32_t>(motion.frames()));
  put_u32(out, static_cast<std::uint32_t>(motion.features()));
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(motion.fps)));
  put_u32(out, static_cast<std::uint32_t>(motion.layout));
  for (Index i = 0; i < motion.data.size(); ++i) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(motion.data.data()[i])));
  }
  return out;
}

MotionTensor decode_container(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  if (bytes.size() < kHeaderBytes) throw FormatError(what + ": truncated header");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError(what + ": bad magic");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kContainerVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
  const std::uint64_t n = get_u32(bytes, 8);
  const std::uint64_t d = get_u32(bytes, 12);
  const auto fps = std::bit_cast<float>(get_u32(bytes, 16));
  const std::uint32_t tag = get_u32(bytes, 20);
  if (tag > static_cast<std::uint32_t>(Layout::kPositions3d)) {
    throw FormatError(what + ": unknown layout tag " + std::to_string(tag));
  }
  if (!std::isfinite(fps) || fps <= 0.0f) throw FormatError(what + ": fps must be positive");
  if (bytes.size() != kHeaderBytes + n * d * 4) {
    throw FormatError(what + ": payload is " + std::to_string(bytes.size() - kHeaderBytes) + " bytes, header implies " +
                      std::to_string(n * d * 4));
  }
  const auto layout = static_cast<Layout>(tag);
  try {
    check_layout_width(layout, static_cast<Index>(d));
  } catch (const InvalidArgument& e) {
    throw FormatError(what + ": " + e.what());
  }
  Matrix data(static_cast<Index>(n), static_cast<Index>(d));
  for (Index i = 0; i < data.size(); ++i) {
    data.data()[i] = std::bit_cast<float>(get_u32(bytes, kHeaderBytes + 4 * static_cast<size_t>(i)));
  }
  return MotionTensor(std::move(data), fps, layout);
}

void write_container(const std::string& path, const MotionTensor& motion) {
  const auto bytes = encode_container(motion);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InvalidArgument("failed writing " + path);
}

MotionTensor read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_container(bytes, path);
}

PrefixSplit split_prefix(const MotionTensor& seq, int n) {
  MDMP_CHECK_ARG(n >= 0 && n < seq.frames(), "prefix length " + std::to_string(n) + " must be in [0, " +
                                                  std::to_string(seq.frames()) + ")");
  return {seq.data.topRows(n), seq.data};
}

std::vector<DatasetRecord> filter_min_duration(std::vector<DatasetRecord> records, double min_seconds) {
  std::vector<DatasetRecord> kept;
  for (auto& r : records) {
    if (r.motion.duration_seconds() > min_seconds) kept.push_back(std::move(r));
  }
  return kept;
}

std::vector<DatasetRecord> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("records") || !j["records"].is_array()) {
    throw FormatError(path + ": manifest needs a 'records' array");
  }
  const fs::path base = fs::path(path).parent_path();
  std::vector<DatasetRecord> out;
  std::set<std::string> seen;
  for (const auto& r : j["records"]) {
    DatasetRecord rec;
    std::string motion_path;
    try {
      rec.id = r.at("id").get<std::string>();
      motion_path = r.at("motion_path").get<std::string>();
      rec.prompts = r.at("prompts").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ": bad record: " + e.what());
    }
    if (rec.prompts.empty()) throw FormatError(path + ": record '" + rec.id + "' has no prompts");
    if (!seen.insert(rec.id).second) throw FormatError(path + ": duplicate id '" + rec.id + "'");
    const fs::path p = fs::path(motion_path).is_absolute() ? fs::path(motion_path) : base / motion_path;
    rec.motion = read_container(p.string());
    out.push_back(std::move(rec));
  }
  return out;
}

void write_manifest(const std::string& dir, const std::vector<DatasetRecord>& records) {
  fs::create_directories(fs::path(dir) / "motions");
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : records) {
    MDMP_CHECK_ARG(!r.prompts.empty(), "record '" + r.id + "' has no prompts");
    const std::string rel = "motions/" + r.id + ".mdmp";
    write_container((fs::path(dir) / rel).string(), r.motion);
    list.push_back({{"id", r.id}, {"motion_path", rel}, {"prompts", r.prompts}});
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw InvalidArgument("cannot write manifest in " + dir);
  out << nlohmann::json{{"records", list}}.dump(2) << '\n';
}

std::vector<ToyClass> default_toy_classes() {
  return {{"walk in a circle clockwise", ToyAction::kCircleClockwise},
          {"walk in a circle counterclockwise", ToyAction::kCircleCounterclockwise},
          {"raise the right hand", ToyAction::kRaiseRightHand},
          {"start walking forward", ToyAction::kWalkForward}};
}

void ToyGenConfig::validate() const {
  MDMP_CHECK_ARG(num_sequences >= 0, "toy generator: negative sequence count");
  MDMP_CHECK_ARG(frames > prefix_len && prefix_len >= 0, "toy generator: frames must exceed the prefix length");
  MDMP_CHECK_ARG(fps > 0.0, "toy generator: fps must be positive");
  MDMP_CHECK_ARG(!classes.empty(), "toy generator: no action classes");
  std::set<std::string> prompts;
  for (const auto& c : classes) {
    MDMP_CHECK_ARG(prompts.insert(c.prompt).second, "toy generator: duplicate prompt '" + c.prompt + "'");
  }
  tree.validate();
  MDMP_CHECK_ARG(shoulder_joint >= 1 && shoulder_joint < tree.joint_count(), "toy generator: shoulder joint out of range");
}

std::vector<ToyMotion> generate_toy_motions(const ToyGenConfig& cfg) {
  cfg.validate();
  const int N = cfg.frames;
  const int J = cfg.tree.joint_count();
  constexpr double kPelvisHeight = 1.0;
  std::vector<ToyMotion> out;
  out.reserve(static_cast<size_t>(cfg.num_sequences));
  for (int s = 0; s < cfg.num_sequences; ++s) {
    Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(s)}));
    ToyMotion m;
    m.class_index = s % static_cast<int>(cfg.classes.size());
    const ToyClass& cls = cfg.classes[static_cast<size_t>(m.class_index)];
    const double yaw0 = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double x0 = rng.uniform(-1.0, 1.0);
    const double z0 = rng.uniform(-1.0, 1.0);

    m.yaw.assign(static_cast<size_t>(N), yaw0);
    m.root_position = Matrix(N, 3);
    m.local_rotations.assign(static_cast<size_t>(N), std::vector<Mat3>(static_cast<size_t>(J - 1), Mat3::Identity()));
    Vec3 pos(x0, kPelvisHeight, z0);

    const bool walking = cls.action == ToyAction::kCircleClockwise || cls.action == ToyAction::kCircleCounterclockwise;
    if (walking) {
      const double speed = rng.uniform(0.6, 1.0) / cfg.fps;  // meters per frame
      const double rate = (cls.action == ToyAction::kCircleClockwise ? -1.0 : 1.0) * 2.0 * std::numbers::pi / N;
      double yaw = yaw0;
      for (int i = 0; i < N; ++i) {
        m.yaw[static_cast<size_t>(i)] = yaw;
        m.root_position.row(i) = pos.transpose();
        pos += yaw_matrix(yaw) * Vec3(0.0, 0.0, speed);
        yaw += rate;
      }
    } else if (cls.action == ToyAction::kWalkForward) {
      // Standing through the prefix, then a smooth start along the facing direction.
      const double onset = rng.uniform(cfg.prefix_len + 2.0, cfg.prefix_len + 16.0);
      const double ramp = rng.uniform(10.0, 20.0);
      const double speed = rng.uniform(0.6, 1.0) / cfg.fps;
      const Vec3 heading = yaw_matrix(yaw0) * Vec3(0.0, 0.0, 1.0);
      for (int i = 0; i < N; ++i) {
        m.root_position.row(i) = pos.transpose();
        pos += heading * (speed * smoothstep((i - onset) / ramp));
      }
    } else {
      const double onset = rng.uniform(cfg.prefix_len + 2.0, cfg.prefix_len + 16.0);
      const double rise = rng.uniform(15.0, 30.0);
      const double amplitude = rng.uniform(1.8, 2.6);
      for (int i = 0; i < N; ++i) {
        m.root_position.row(i) = pos.transpose();
        const double theta = amplitude * smoothstep((i - onset) / rise);
        m.local_rotations[static_cast<size_t>(i)][static_cast<size_t>(cfg.shoulder_joint - 1)] = rot_z(-theta);
      }
    }

    Matrix positions(N, 3 * J);
    for (int i = 0; i < N; ++i) {
      const Matrix p = forward_kinematics(m.local_rotations[static_cast<size_t>(i)], yaw_matrix(m.yaw[static_cast<size_t>(i)]),
                                          m.root_position.row(i).transpose(), cfg.tree);
      positions.row(i) = Eigen::Map<const RowVector>(p.data(), 3 * J);
    }
    m.record.id = cfg.id_prefix + "_" + std::to_string(s);
    m.record.prompts = {cls.prompt};
    m.record.motion = MotionTensor(round_to_float(positions), cfg.fps, Layout::kPositions3d);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<DatasetRecord> generate_toy_dataset(const ToyGenConfig& cfg) {
  std::vector<DatasetRecord> out;
  for (auto& m : generate_toy_motions(cfg)) out.push_back(std::move(m.record));
  return out;
}

Normalizer Normalizer::fit(const std::vector<Matrix>& sequences) {
  MDMP_CHECK_ARG(!sequences.empty(), "normalizer: no sequences");
  const Index D = sequences.front().cols();
  RowVector sum = RowVector::Zero(D);
  double count = 0.0;
  for (const auto& s : sequences) {
    MDMP_CHECK_ARG(s.cols() == D, "normalizer: feature widths differ");
    sum += s.colwise().sum();
    count += static_cast<double>(s.rows());
  }
  MDMP_CHECK_ARG(count > 0.0, "normalizer: no frames");
  Normalizer n;
  n.mean = sum / count;
  RowVector sq = RowVector::Zero(D);
  for (const auto& s : sequences) sq += (s.rowwise() - n.mean).array().square().matrix().colwise().sum();
  n.std = (sq / count).cwiseSqrt();
  // Constant features keep unit scale.
  for (Index f = 0; f < D; ++f) {
    if (n.std(f) < 1e-6) n.std(f) = 1.0;
  }
  return n;
}

Normalizer Normalizer::identity(Index features) {
  return {RowVector::Zero(features), RowVector::Ones(features)};
}

Matrix Normalizer::normalize(const Matrix& x) const {
  MDMP_CHECK_ARG(x.cols() == mean.cols(), "normalizer: feature width mismatch");
  return ((x.rowwise() - mean).array().rowwise() / std.array()).matrix();
}

Matrix Normalizer::denormalize(const Matrix& z) const {
  MDMP_CHECK_ARG(z.cols() == mean.cols(), "normalizer: feature width mismatch");
  return ((z.array().rowwise() * std.array()).rowwise() + mean.array()).matrix();
}

}  // namespace mdmp
