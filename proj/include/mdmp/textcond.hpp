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

#pragma once

#include "mdmp/tensor.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>

namespace mdmp {

inline constexpr int kTextEmbeddingDim = 512;

enum class EmbeddingSource { kStub, kPrecomputed };

struct TextEmbedding {
  Vector vector = Vector::Zero(kTextEmbeddingDim);
  EmbeddingSource source = EmbeddingSource::kStub;
};

// FNV-1a, 64-bit. Part of the stub encoder's external contract.
std::uint64_t fnv1a64(std::string_view bytes);

// Deterministic stand-in for a frozen text encoder.
//
// Contract: ASCII-lowercase the prompt, split on ASCII whitespace
// (space, \t, \n, \v, \f, \r), hash each token's bytes with fnv1a64, add one
// to bucket hash % 512, then L2-normalize the bucket counts. An empty or
// whitespace-only prompt gives the zero vector.
TextEmbedding stub_encode(std::string_view prompt);

struct EmbeddingRecord {
  std::string prompt;
  TextEmbedding embedding;
};

// Reads a JSON-lines file of {"id", "prompt", "embedding": [512 floats]}.
// Throws FormatError on a wrong dimension, duplicate id or malformed line.
std::map<std::string, EmbeddingRecord> load_embeddings(const std::string& path);

void write_embeddings(const std::string& path, const std::map<std::string, EmbeddingRecord>& records);

// Prompt -> embedding, either the stub or a lookup table.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual TextEmbedding encode(const std::string& prompt) const = 0;
};

class StubTextEncoder final : public TextEncoder {
 public:
  TextEmbedding encode(const std::string& prompt) const override { return stub_encode(prompt); }
};

// Resolves a prompt by id first, then by exact prompt text.
class PrecomputedTextEncoder final : public TextEncoder {
 public:
  explicit PrecomputedTextEncoder(std::map<std::string, EmbeddingRecord> records);
  TextEmbedding encode(const std::string& prompt_or_id) const override;

 private:
  std::map<std::string, EmbeddingRecord> by_id_;
  std::map<std::string, std::string> id_by_prompt_;
};

// "stub" or "precomputed:<path>".
std::unique_ptr<TextEncoder> make_text_encoder(const std::string& spec);

}  // namespace mdmp
