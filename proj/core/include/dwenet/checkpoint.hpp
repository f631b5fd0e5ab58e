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
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dwenet/config.hpp"
#include "dwenet/data.hpp"
#include "dwenet/model.hpp"
#include "dwenet/optimizer.hpp"

namespace dwenet::training {

// File layout, all integers little-endian:
//   "DWNTCKPT" | u32 version | str config_json | u32 n_tokens, str token...
//   | u32 n_tensors, (str name, u32 rank, u64 dim..., f32 value...)...
//   | u8 has_adam [u64 step, u32 n, (str name, u64 len, f32 m..., f32 v...)...]
//   | str rng_state | u32 crc32 of every preceding byte
// where str = u32 byte length + UTF-8 bytes.
inline constexpr char kCheckpointMagic[8] = {'D', 'W', 'N', 'T',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct CheckpointContents {
  TrainConfig config;
  data::Vocabulary vocab;
  std::vector<NamedTensor> tensors;
  std::optional<optim::AdamState<float>> optimizer;
  std::string rng_state;  // empty when not recorded
};

CheckpointContents snapshot(const TrainConfig& config,
                            const data::Vocabulary& vocab,
                            const model::Model<float>& model,
                            const optim::AdamState<float>* optimizer = nullptr,
                            const ops::Rng* rng = nullptr);

std::vector<std::uint8_t> encode_checkpoint(const CheckpointContents& c);
// Verifies magic, checksum and version before decoding anything else.
CheckpointContents decode_checkpoint(std::span<const std::uint8_t> bytes);

// Writes to a sibling temporary file and renames it over `path`.
void write_checkpoint(const std::filesystem::path& path,
                      const CheckpointContents& c);
CheckpointContents read_checkpoint(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path,
                     const TrainConfig& config, const data::Vocabulary& vocab,
                     const model::Model<float>& model,
                     const optim::AdamState<float>* optimizer = nullptr,
                     const ops::Rng* rng = nullptr);

struct LoadedModel {
  TrainConfig config;
  data::Vocabulary vocab;
  model::Model<float> model;
  std::optional<optim::AdamState<float>> optimizer;
  std::string rng_state;
};

// Rebuilds the model described by the file. With `expected`, any difference
// in the model section is reported as a config mismatch.
LoadedModel load_checkpoint(const std::filesystem::path& path,
                            const model::ModelConfig* expected = nullptr);
LoadedModel instantiate(CheckpointContents contents,
                        const model::ModelConfig* expected = nullptr);

}  // namespace dwenet::training
