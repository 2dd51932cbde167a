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

#include "mdmp/checkpoint.hpp"

#include "mdmp/errors.hpp"

#include "json.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

namespace mdmp {

using Eigen::Index;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'D', 'M', 'P', 'C', 'K', 'P', 'T'};
constexpr const char* kNormMean = "normalizer.mean";
constexpr const char* kNormStd = "normalizer.std";

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + static_cast<size_t>(i)]) << (8 * i);
  return v;
}

json model_json(const DenoiserConfig& c) {
  return {{"features", c.features},   {"latent_dim", c.latent_dim},   {"layers", c.layers},
          {"heads", c.heads},         {"ff_dim", c.ff_dim},           {"dropout", c.dropout},
          {"learn_variance", c.learn_variance}, {"encoder", to_string(c.encoder)},
          {"gcn_hidden", c.gcn_hidden}, {"gcn_layers", c.gcn_layers}, {"text_dim", c.text_dim}};
}

DenoiserConfig model_from_json(const json& j) {
  DenoiserConfig c;
  c.features = j.at("features").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.learn_variance = j.at("learn_variance").get<bool>();
  c.encoder = encoder_from_string(j.at("encoder").get<std::string>());
  c.gcn_hidden = j.at("gcn_hidden").get<int>();
  c.gcn_layers = j.at("gcn_layers").get<int>();
  c.text_dim = j.at("text_dim").get<int>();
  return c;
}

json train_json(const TrainConfig& c) {
  return {{"lambda_vlb", c.lambda_vlb}, {"guidance_scale", c.guidance_scale}, {"text_mask_prob", c.text_mask_prob},
          {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},   {"steps", c.steps},
          {"T", c.T},                   {"prefix_len", c.prefix_len},         {"seed", c.seed},
          {"grad_clip_norm", c.grad_clip_norm}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  c.lambda_vlb = j.at("lambda_vlb").get<double>();
  c.guidance_scale = j.at("guidance_scale").get<double>();
  c.text_mask_prob = j.at("text_mask_prob").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.steps = j.at("steps").get<int>();
  c.T = j.at("T").get<int>();
  c.prefix_len = j.at("prefix_len").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::pair<std::string, const Matrix*>> tensors;
  for (int i = 0; i < ckpt.params.size(); ++i) tensors.emplace_back(ckpt.params.name(i), &ckpt.params.value(i));
  const Matrix mean = ckpt.normalizer.mean;
  const Matrix std_dev = ckpt.normalizer.std;
  tensors.emplace_back(kNormMean, &mean);
  tensors.emplace_back(kNormStd, &std_dev);

  json list = json::array();
  for (const auto& [name, m] : tensors) list.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
  const json header = {{"model", model_json(ckpt.model)}, {"train", train_json(ckpt.train)},
                       {"frames", ckpt.frames},           {"fps", ckpt.fps},
                       {"layout", to_string(ckpt.layout)}, {"text_encoder", ckpt.text_encoder},
                       {"tensors", list}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, m] : tensors) {
    for (Index i = 0; i < m->size(); ++i) {
      const auto f = static_cast<float>(m->data()[i]);
      if (!std::isfinite(f)) throw NumericalError("checkpoint: tensor '" + name + "' has a non-finite entry");
      put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  if (bytes.size() < 16) throw FormatError(what + ": truncated header");
  if (!std::equal(kMagic, kMagic + 8, bytes.begin())) throw FormatError(what + ": bad magic");
  const std::uint32_t version = get_u32(bytes, 8);
  if (version != kCheckpointVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
  const size_t header_len = get_u32(bytes, 12);
  if (bytes.size() < 16 + header_len) throw FormatError(what + ": truncated header");
  Checkpoint ck;
  std::vector<std::tuple<std::string, Index, Index>> shapes;
  try {
    const json h = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
    ck.model = model_from_json(h.at("model"));
    ck.train = train_from_json(h.at("train"));
    ck.frames = h.at("frames").get<int>();
    ck.fps = h.at("fps").get<double>();
    ck.layout = layout_from_string(h.at("layout").get<std::string>());
    ck.text_encoder = h.at("text_encoder").get<std::string>();
    for (const auto& t : h.at("tensors")) {
      const auto rows = t.at("rows").get<Index>();
      const auto cols = t.at("cols").get<Index>();
      if (rows < 0 || cols < 0) throw FormatError(what + ": negative tensor shape");
      shapes.emplace_back(t.at("name").get<std::string>(), rows, cols);
    }
  } catch (const json::exception& e) {
    throw FormatError(what + ": bad header: " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(what + ": bad header: " + e.what());
  }
  size_t expected = 16 + header_len;
  for (const auto& [name, r, c] : shapes) expected += static_cast<size_t>(r * c) * 4;
  if (bytes.size() != expected) {
    throw FormatError(what + ": payload is " + std::to_string(bytes.size()) + " bytes, header implies " +
                      std::to_string(expected));
  }
  size_t at = 16 + header_len;
  bool have_mean = false, have_std = false;
  for (const auto& [name, r, c] : shapes) {
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i, at += 4) m.data()[i] = std::bit_cast<float>(get_u32(bytes, at));
    const bool norm = name == kNormMean || name == kNormStd;
    if (norm && r != 1) throw FormatError(what + ": normalizer tensors must be a single row");
    if (name == kNormMean) {
      ck.normalizer.mean = m;
      have_mean = true;
    } else if (name == kNormStd) {
      ck.normalizer.std = m;
      have_std = true;
    } else {
      try {
        ck.params.add(name, std::move(m));
      } catch (const InvalidArgument& e) {
        throw FormatError(what + ": " + e.what());
      }
    }
  }
  if (!have_mean || !have_std) throw FormatError(what + ": missing normalizer tensors");
  if (ck.normalizer.mean.cols() != ck.model.features || ck.normalizer.std.cols() != ck.model.features) {
    throw FormatError(what + ": normalizer width does not match the model");
  }
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InvalidArgument("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path);
}

}  // namespace mdmp
