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

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dwenet/config.hpp"
#include "dwenet/model.hpp"
#include "dwenet/training.hpp"

namespace dwenet::analysis {

enum class HeatmapNorm { kGlobal, kPerColumn };

// Dependency of one dense layer on the sources feeding its input: rows are
// source groups (the block input planes, then every earlier layer of the
// block), columns are groups of the layer's output channels. A cell holds
// the mean |w| over the filter taps, input channels and output channels it
// covers, divided by the matrix maximum (or the column maximum).
struct HeatmapMatrix {
  std::size_t block = 0;         // 0-based
  std::size_t target_layer = 0;  // 0-based
  std::vector<std::size_t> row_sizes;  // n, k, k, ...
  std::vector<std::size_t> col_sizes;
  std::vector<std::string> row_labels;  // "input", "L1", ...
  std::vector<std::string> col_labels;  // "C1", ...
  std::vector<double> raw;     // [rows, cols] before normalization
  std::vector<double> values;  // [rows, cols] normalized into [0, 1]
  // Rows before this index are block input planes; the boundary is drawn
  // as a bar when rendered.
  std::size_t input_boundary = 1;

  std::size_t rows() const { return row_sizes.size(); }
  std::size_t cols() const { return col_sizes.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  // Mean normalized value of one source row.
  double row_mean(std::size_t r) const;
};

// `kernel` is the target layer's [C_out, C_in, F] weight; C_in must equal
// n + t * k for some t. Output channels are grouped `col_group` at a time
// (the last group may be smaller).
HeatmapMatrix dependency_matrix(std::span<const float> kernel,
                                std::size_t c_out, std::size_t c_in,
                                std::size_t width, std::size_t block_inputs,
                                std::size_t growth_rate,
                                HeatmapNorm norm = HeatmapNorm::kGlobal,
                                std::size_t col_group = 1);

// Heatmap of `target_layer` (default: last) in block `block` of a dense
// model.
HeatmapMatrix l1_dependency_matrix(const model::Model<float>& model,
                                   std::size_t block,
                                   std::optional<std::size_t> target_layer = {},
                                   HeatmapNorm norm = HeatmapNorm::kGlobal,
                                   std::size_t col_group = 1);

// Header row of column labels; each data row starts with its source label
// and group size.
void write_heatmap_csv(const std::filesystem::path& path,
                       const HeatmapMatrix& m);
// Binary 8-bit PGM, `cell` pixels per cell, darker = stronger, with a black
// bar after the input-plane rows.
void write_heatmap_pgm(const std::filesystem::path& path,
                       const HeatmapMatrix& m, std::size_t cell = 16);

struct CaseRecord {
  std::size_t index = 0;
  std::string text;
  int label = 0;
  int pred_a = 0;
  int pred_b = 0;

  friend bool operator==(const CaseRecord&, const CaseRecord&) = default;
};

// Items model A classifies correctly and model B does not, in input order.
std::vector<CaseRecord> error_set_diff(std::span<const int> preds_a,
                                       std::span<const int> preds_b,
                                       std::span<const int> labels,
                                       std::span<const std::string> texts);

// Columns text,label,pred_a,pred_b with RFC 4180 quoting.
void write_cases_csv(const std::filesystem::path& path,
                     std::span<const CaseRecord> cases);

struct AblationCell {
  std::string name;
  std::vector<std::string> overrides;  // applied on top of the base config
};

// Structural variants on Headlines: 8-layer plain / residual / dense
// (k = 4), 28-layer dense, 8-layer dense with k = 32, 300-d embeddings
// twice, static embeddings and the full network.
std::vector<AblationCell> default_ablation_grid();

// {"cells": [{"name": ..., "overrides": ["section.key=value", ...]}]}
std::vector<AblationCell> load_ablation_grid(const std::filesystem::path& path);

struct AblationRow {
  std::string name;
  TrainConfig config;
  training::MultiRunResult result;
};

// One multi_run per cell with `runs` runs each; data is re-prepared only
// when a cell changes the data section or the embedding width.
std::vector<AblationRow> ablation_run(const TrainConfig& base,
                                      std::span<const AblationCell> grid,
                                      std::size_t runs,
                                      std::size_t threads = 0);

// name,connectivity,block_sizes,growth_rate,embed_dim,embedding,
// embedding_trainable,runs,mean_accuracy,std_accuracy,mean_f1
void write_ablation_csv(const std::filesystem::path& path,
                        std::span<const AblationRow> rows);

}  // namespace dwenet::analysis
