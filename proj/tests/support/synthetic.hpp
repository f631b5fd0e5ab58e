// Copyright 2026 The dweNet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dwenet/data.hpp"

namespace dwenet::testing {

// Headline-like sentences whose word choice depends on the label, with
// enough shared vocabulary that the task is learnable but not trivial.
// Examples are emitted in an interleaved, deterministic order.
std::vector<data::Example> synthetic_headlines(std::size_t non_sarcastic,
                                               std::size_t sarcastic,
                                               std::uint64_t seed);

void write_headlines_jsonl(const std::filesystem::path& path,
                           std::span<const data::Example> examples);
void write_sarc_tsv(const std::filesystem::path& path,
                    std::span<const data::Example> examples);

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace dwenet::testing
