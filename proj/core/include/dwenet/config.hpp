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

#include "dwenet/model.hpp"
#include "dwenet/optimizer.hpp"

namespace dwenet {

enum class DatasetKind { kHeadlines, kSarcPol, kSarcMain };

std::string_view to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(std::string_view name);

struct OptimizerConfig {
  double lr_max = 1e-3;
  double weight_decay = 1e-2;
  bool decoupled_weight_decay = true;
  double beta2 = 0.99;
  double eps = 1e-8;
  double pct_up = 0.3;
  double div = 25.0;
  double final_div = 1e4;
  double mom_high = 0.8;
  double mom_low = 0.7;

  friend bool operator==(const OptimizerConfig&,
                         const OptimizerConfig&) = default;
};

struct DataConfig {
  DatasetKind dataset = DatasetKind::kHeadlines;
  // Headlines reads `train_path` only and splits it; SARC reads both.
  std::string train_path;
  std::string test_path;
  // Empty: every row is drawn from N(0, 0.1^2).
  std::string embeddings_path;
  double test_frac = 0.2;
  std::uint64_t split_seed = 42;
  std::size_t min_freq = 1;
  // SARC-Main needs hours of compute per run and must be asked for.
  bool allow_long_run = false;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct TrainingSection {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::size_t runs = 20;

  friend bool operator==(const TrainingSection&,
                         const TrainingSection&) = default;
};

struct TrainConfig {
  model::ModelConfig model;
  OptimizerConfig optimizer;
  DataConfig data;
  TrainingSection training;

  void validate() const;
  optim::OneCycleSpec schedule(std::size_t total_steps) const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Serialized as {"model": {...}, "optimizer": {...}, "data": {...},
// "training": {...}}. Every key is optional; unknown keys are rejected.
std::string to_json(const TrainConfig& config);
TrainConfig config_from_json(std::string_view text);

// `section.key=value`; the value is parsed as JSON and falls back to a
// plain string ("model.connectivity=plain").
void apply_override(TrainConfig& config, std::string_view assignment);

TrainConfig load_config(const std::filesystem::path& path,
                        std::span<const std::string> overrides = {});
void save_config(const TrainConfig& config, const std::filesystem::path& path);

}  // namespace dwenet
