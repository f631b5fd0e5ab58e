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

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "dwenet/config.hpp"
#include "dwenet/data.hpp"
#include "dwenet/model.hpp"
#include "dwenet/optimizer.hpp"

namespace dwenet::training {

using Model = model::Model<float>;
using ops::Rng;

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

// The positive class is sarcastic. Precision, recall and F1 are 0 when
// their denominators are 0.
struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  Confusion confusion;
  std::vector<double> loss_curve;  // mean training loss per epoch

  static Metrics from_confusion(const Confusion& c);
};

// Argmax over {non-sarcastic, sarcastic}; a tie picks non-sarcastic.
int decide(double p_non_sarcastic, double p_sarcastic);

Metrics metrics_from_predictions(std::span<const int> predictions,
                                 std::span<const int> labels);

struct PreparedData {
  data::Vocabulary vocab;
  data::EmbeddingMatrix embedding;
  data::Dataset train;
  data::Dataset test;
};

// Loads the configured corpus; Headlines is split with data.split_seed,
// SARC ships pre-split.
data::Split load_split(const TrainConfig& config);

// Loads the configured corpus, splits Headlines, builds the vocabulary from
// the training half and reads (or draws) the embedding table.
PreparedData prepare_data(const TrainConfig& config);

// Same, starting from examples already in memory.
PreparedData prepare_data(const TrainConfig& config,
                          std::span<const data::Example> train,
                          std::span<const data::Example> test);

// Number of optimizer steps a run takes: epochs * ceil(|train| / batch).
std::size_t total_steps(std::size_t epochs, std::size_t train_size,
                        std::size_t batch_size);

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::size_t steps = 0;  // optimizer steps taken so far
};

using EpochCallback = std::function<void(const EpochReport&, Model&)>;

struct TrainResult {
  Model model;
  optim::AdamState<float> optimizer;
  Metrics metrics;  // eval-mode metrics on the test set, loss curve attached
  std::vector<double> step_losses;
  Rng rng;  // dropout stream after the final step
};

// Runs epochs * ceil(|train| / batch) Adam steps. Batch i of the run uses
// the one-cycle value at step i, so the first and last batches sit on the
// schedule endpoints. An empty test set skips the final evaluation.
TrainResult train_model(const TrainConfig& config, const data::Dataset& train,
                        const data::Dataset& test,
                        const data::EmbeddingMatrix& embedding,
                        std::uint64_t seed,
                        const EpochCallback& on_epoch = {});

// Eval-mode probabilities {p_non_sarcastic, p_sarcastic} per row.
std::vector<std::array<float, 2>> predict_proba(Model& model,
                                                const data::Dataset& dataset,
                                                std::size_t batch_size = 256);
std::vector<int> predict(Model& model, const data::Dataset& dataset,
                         std::size_t batch_size = 256);

Metrics evaluate(Model& model, const data::Dataset& dataset);

struct MetricStats {
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct MultiRunResult {
  std::uint64_t base_seed = 0;
  std::vector<Metrics> runs;
  MetricStats mean;
  MetricStats stddev;  // sample standard deviation, 0 for a single run
};

MultiRunResult summarize(std::uint64_t base_seed, std::vector<Metrics> runs);

// Called on the worker thread as each run finishes.
using RunHook = std::function<void(std::size_t run, TrainResult& result)>;

// Run r trains with seed base_seed + r. Runs execute on up to `threads`
// workers (0: thread_budget()); results are ordered by run index.
MultiRunResult multi_run(const TrainConfig& config, const PreparedData& data,
                         std::size_t runs, std::size_t threads = 0,
                         const RunHook& on_run = {});

// DWENET_THREADS when set, otherwise the hardware concurrency (at least 1).
std::size_t thread_budget();

// `run,accuracy,precision,recall,f1`, one row per run.
void write_metrics_csv(const std::filesystem::path& path,
                       const MultiRunResult& result);
void write_summary_json(const std::filesystem::path& path,
                        const MultiRunResult& result,
                        const TrainConfig& config);

}  // namespace dwenet::training
