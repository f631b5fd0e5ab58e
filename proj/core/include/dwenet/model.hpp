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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dwenet/data.hpp"
#include "dwenet/ops.hpp"
#include "dwenet/optimizer.hpp"

namespace dwenet::model {

using ops::Rng;

enum class Connectivity { kDense, kResidual, kPlain };

std::string_view to_string(Connectivity c);
Connectivity parse_connectivity(std::string_view name);

inline constexpr std::size_t kNumClasses = 2;
inline constexpr std::size_t kNumBlocks = 4;

struct ModelConfig {
  Connectivity connectivity = Connectivity::kDense;
  std::array<std::size_t, kNumBlocks> block_sizes{6, 12, 24, 16};
  std::size_t growth_rate = 32;
  std::size_t init_channels = 64;
  std::size_t embed_dim = 50;
  std::size_t max_len = 64;
  // Hidden widths of the classifier head; a final kNumClasses-wide layer
  // always follows.
  std::vector<std::size_t> head_dims{512, 128};
  double leaky_slope = ops::kLeakySlope;
  double dropout_rate = 0.2;
  bool embedding_trainable = true;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// The full 56-layer network: dense, blocks (6, 12, 24, 16), k = 32.
ModelConfig dwenet_preset();

// Named depth presets sharing the 4-block skeleton:
// 8 -> (1,1,1,1), 16 -> (4,4,4,4), 28 -> (3,4,6,3), 56 -> (6,12,24,16).
std::array<std::size_t, kNumBlocks> depth_preset(int layers);

// Conv -> BatchNorm -> ReLU.
template <typename T>
struct ConvUnit {
  BasicTensor<T> kernel;  // [C_out, C_in, F] or [C_out, 3, d + 2] for the stem
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  ops::BatchNormState<T> bn;

  std::size_t in_channels() const { return kernel.dim(1); }
  std::size_t out_channels() const { return kernel.dim(0); }
};

template <typename T>
struct LinearUnit {
  BasicTensor<T> weight;  // [n_out, n_in]
  BasicTensor<T> bias;
};

template <typename T>
struct BlockParams {
  std::vector<ConvUnit<T>> layers;
  // Residual only: 1x1 projection of the skip path when widths differ.
  std::vector<std::optional<BasicTensor<T>>> projections;
};

// Shapes observed while running `Model::forward`, batch axis included.
struct ForwardTrace {
  Shape stem;
  std::vector<Shape> block_outputs;
  std::vector<Shape> transition_outputs;
  std::size_t features = 0;  // m, the pooled feature count
};

// [B, S] ids -> [B, S, D]; the padding row receives no gradient.
template <typename T>
BasicTensor<T> embed_lookup(std::span<const std::int32_t> ids,
                            std::size_t batch, const BasicTensor<T>& table);

// [B, S, D] -> [B, init_channels, S]: the 3 x (d + 2) kernel spans the
// zero-padded embedding axis, the sequence axis is padded by one.
template <typename T>
BasicTensor<T> initial_conv(const BasicTensor<T>& x, ConvUnit<T>& unit,
                            Mode mode);

template <typename T>
BasicTensor<T> conv_unit_forward(const BasicTensor<T>& x, ConvUnit<T>& unit,
                                 std::size_t pad, Mode mode);

template <typename T>
BasicTensor<T> dense_layer_forward(const BasicTensor<T>& x, ConvUnit<T>& unit,
                                   Mode mode);

// Each layer sees concat(x, y_1, ..., y_{t-1}); the result is
// concat(x, y_1, ..., y_i) with n + i * k channels.
template <typename T>
BasicTensor<T> dense_block_forward(const BasicTensor<T>& x,
                                   std::span<ConvUnit<T>> layers, Mode mode);

// 1x1 Conv -> BN -> ReLU to floor(c / 2) channels, then kernel-2 average.
template <typename T>
BasicTensor<T> transition_forward(const BasicTensor<T>& x, ConvUnit<T>& unit,
                                  Mode mode);

// y = skip(x) + relu(bn(conv(x))) per layer, skip being identity or the
// layer's 1x1 projection.
template <typename T>
BasicTensor<T> residual_block_forward(const BasicTensor<T>& x,
                                      BlockParams<T>& block, Mode mode);

template <typename T>
BasicTensor<T> plain_block_forward(const BasicTensor<T>& x,
                                   std::span<ConvUnit<T>> layers, Mode mode);

// Global max and average pooling (concatenated, max first), then the
// linear stack with leaky ReLU + dropout between layers. Returns logits.
template <typename T>
BasicTensor<T> classifier_head_forward(const BasicTensor<T>& x,
                                       std::span<const LinearUnit<T>> head,
                                       double leaky_slope, double dropout_rate,
                                       Mode mode, Rng& rng,
                                       std::size_t* features = nullptr);

// Channel count produced by a block of the given connectivity.
std::size_t block_output_channels(Connectivity c, std::size_t in_channels,
                                  std::size_t layers, std::size_t growth_rate);

template <typename T>
class Model {
 public:
  // Parameter initialization: He-normal conv and linear weights, zero
  // biases, BN gamma 1 / beta 0 with running mean 0 / var 1.
  Model(const ModelConfig& config, const data::EmbeddingMatrix& embedding,
        Rng& rng);

  const ModelConfig& config() const { return config_; }

  // Logits [B, kNumClasses] for row-major [B, max_len] token ids.
  BasicTensor<T> forward(std::span<const std::int32_t> ids, std::size_t batch,
                         Mode mode, Rng& rng, ForwardTrace* trace = nullptr);

  // Eval-mode class probabilities without graph recording.
  BasicTensor<T> predict_proba(std::span<const std::int32_t> ids,
                               std::size_t batch);

  std::span<Parameter<T>> parameters() { return params_; }
  std::span<const Parameter<T>> parameters() const { return params_; }
  std::size_t parameter_count() const;

  // Every parameter and BN running statistic in a stable order.
  std::vector<std::pair<std::string, BasicTensor<T>>> named_tensors() const;
  // Overwrites values by name; all names and shapes must match.
  void load_named_tensors(
      const std::vector<std::pair<std::string, std::vector<T>>>& values);

  void zero_grad();

  const BasicTensor<T>& embedding() const { return embedding_; }
  BlockParams<T>& block(std::size_t b) { return blocks_.at(b); }
  const BlockParams<T>& block(std::size_t b) const { return blocks_.at(b); }
  std::size_t block_input_channels(std::size_t b) const {
    return block_inputs_.at(b);
  }

 private:
  void register_conv(const std::string& prefix, ConvUnit<T>& unit);

  ModelConfig config_;
  BasicTensor<T> embedding_;
  ConvUnit<T> stem_;
  std::vector<BlockParams<T>> blocks_;
  std::vector<ConvUnit<T>> transitions_;
  std::vector<LinearUnit<T>> head_;
  std::vector<std::size_t> block_inputs_;
  std::vector<Parameter<T>> params_;
  std::vector<std::pair<std::string, BasicTensor<T>>> buffers_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace dwenet::model
