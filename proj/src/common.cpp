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

#include "mdmp/errors.hpp"
#include "mdmp/parallel.hpp"
#include "mdmp/tensor.hpp"

#include <cstdlib>
#include <string>

namespace mdmp {

std::string to_string(Layout layout) {
  switch (layout) {
    case Layout::kRaw: return "raw";
    case Layout::kHumanMl263: return "humanml-263";
    case Layout::kPositions3d: return "positions-3d";
  }
  return "unknown";
}

Layout layout_from_string(const std::string& name) {
  if (name == "raw") return Layout::kRaw;
  if (name == "humanml-263" || name == "humanml263") return Layout::kHumanMl263;
  if (name == "positions-3d" || name == "positions3d") return Layout::kPositions3d;
  throw InvalidArgument("unknown layout '" + name + "' (expected raw, humanml-263 or positions-3d)");
}

int default_thread_count(int fallback) {
  const char* env = std::getenv("MDMP_THREADS");
  if (env == nullptr || *env == '\0') return fallback;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 1024) throw InvalidArgument(std::string("MDMP_THREADS must be a positive integer, got '") + env + "'");
  return static_cast<int>(v);
}

}  // namespace mdmp
