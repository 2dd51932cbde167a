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

#include "mdmp/textcond.hpp"

#include "mdmp/errors.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>

namespace mdmp {

namespace {

bool is_ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r'; }

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

TextEmbedding stub_encode(std::string_view prompt) {
  TextEmbedding e;
  e.source = EmbeddingSource::kStub;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    e.vector(static_cast<Eigen::Index>(fnv1a64(token) % kTextEmbeddingDim)) += 1.0;
    token.clear();
  };
  for (char c : prompt) {
    if (is_ascii_space(c)) {
      flush();
    } else {
      token.push_back(ascii_lower(c));
    }
  }
  flush();
  const double norm = e.vector.norm();
  if (norm > 0.0) e.vector /= norm;
  return e;
}

std::map<std::string, EmbeddingRecord> load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open embedding file " + path);
  std::map<std::string, EmbeddingRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("embedding") ||
        !j["embedding"].is_array()) {
      throw FormatError(where + ": record needs string 'id' and array 'embedding'");
    }
    const auto& arr = j["embedding"];
    if (arr.size() != kTextEmbeddingDim) {
      throw FormatError(where + ": embedding has " + std::to_string(arr.size()) + " entries, expected " +
                        std::to_string(kTextEmbeddingDim));
    }
    EmbeddingRecord rec;
    rec.prompt = j.value("prompt", "");
    rec.embedding.source = EmbeddingSource::kPrecomputed;
    for (size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_number()) throw FormatError(where + ": embedding entries must be numbers");
      const double v = arr[i].get<double>();
      if (!std::isfinite(v)) throw FormatError(where + ": non-finite embedding entry");
      rec.embedding.vector(static_cast<Eigen::Index>(i)) = v;
    }
    const std::string id = j["id"].get<std::string>();
    if (!out.emplace(id, std::move(rec)).second) throw FormatError(where + ": duplicate id '" + id + "'");
  }
  return out;
}

void write_embeddings(const std::string& path, const std::map<std::string, EmbeddingRecord>& records) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  for (const auto& [id, rec] : records) {
    nlohmann::json j;
    j["id"] = id;
    j["prompt"] = rec.prompt;
    std::vector<double> v(rec.embedding.vector.data(), rec.embedding.vector.data() + rec.embedding.vector.size());
    j["embedding"] = v;
    out << j.dump() << '\n';
  }
}

PrecomputedTextEncoder::PrecomputedTextEncoder(std::map<std::string, EmbeddingRecord> records)
    : by_id_(std::move(records)) {
  for (const auto& [id, rec] : by_id_) {
    if (!rec.prompt.empty()) id_by_prompt_.emplace(rec.prompt, id);
  }
}

TextEmbedding PrecomputedTextEncoder::encode(const std::string& prompt_or_id) const {
  if (auto it = by_id_.find(prompt_or_id); it != by_id_.end()) return it->second.embedding;
  if (auto it = id_by_prompt_.find(prompt_or_id); it != id_by_prompt_.end()) return by_id_.at(it->second).embedding;
  throw InvalidArgument("no precomputed embedding for '" + prompt_or_id + "'");
}

std::unique_ptr<TextEncoder> make_text_encoder(const std::string& spec) {
  if (spec == "stub") return std::make_unique<StubTextEncoder>();
  const std::string tag = "precomputed:";
  if (spec.rfind(tag, 0) == 0) {
    return std::make_unique<PrecomputedTextEncoder>(load_embeddings(spec.substr(tag.size())));
  }
  throw InvalidArgument("unknown text encoder '" + spec + "' (expected stub or precomputed:<path>)");
}

}  // namespace mdmp
