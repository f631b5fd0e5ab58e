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
#include <random>
#include <span>
#include <vector>

#include "dwenet/tensor.hpp"

// Differentiable primitives. Feature maps are [C, S] or batched [B, C, S]
// (channels, signal); every op returns the same rank it was given.
namespace dwenet::ops {

using Rng = std::mt19937_64;

// Stacks channels in input order. All inputs share batch and signal extents.
template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> xs);

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::size_t begin,
                              std::size_t count);

// Stride-1 cross-correlation along the signal axis with zero padding.
// kernel is [C_out, C_in, F]; output signal is S + 2*pad - F + 1.
template <typename T>
BasicTensor<T> conv_seq(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                        std::size_t pad);
template <typename T>
BasicTensor<T> conv_seq(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                        const BasicTensor<T>& bias, std::size_t pad);

// 2-D convolution of a single-plane [B, S, D] input whose kernel
// [C_out, F, D + 2*emb_pad] spans the whole zero-padded embedding axis, so
// the embedding axis collapses and the result is [B, C_out, S'].
template <typename T>
BasicTensor<T> conv_span(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                         std::size_t seq_pad, std::size_t emb_pad);

template <typename T>
struct BatchNormState {
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNormState make(std::size_t channels);
};

// Per-channel normalization over (batch, signal). Train mode uses batch
// statistics and updates `state` (running var takes the unbiased estimate).
template <typename T>
BasicTensor<T> batchnorm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                         const BasicTensor<T>& beta, BatchNormState<T>& state,
                         Mode mode);

enum class Activation { kRelu, kLeakyRelu };

inline constexpr double kLeakySlope = 0.01;

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, double slope = kLeakySlope);
template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& x, Activation kind,
                          double slope = kLeakySlope);

enum class Pool { kAvgK2, kGlobalMax, kGlobalAvg };

// kAvgK2: kernel 2, stride 2, a trailing odd element is dropped.
// Global kinds reduce the signal axis to length 1.
template <typename T>
BasicTensor<T> pool(const BasicTensor<T>& x, Pool kind);

// y = W x + b for x of shape [n_in] or [B, n_in].
template <typename T>
BasicTensor<T> affine(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

// Inverted dropout; identity in eval mode or at rate 0.
template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double rate, Mode mode,
                       Rng& rng);

// Row-wise softmax of [B, C] logits (not differentiable).
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

template <typename T>
struct CrossEntropy {
  BasicTensor<T> loss;           // scalar mean negative log-likelihood
  BasicTensor<T> probabilities;  // [B, C], detached
};

template <typename T>
CrossEntropy<T> softmax_cross_entropy(const BasicTensor<T>& logits,
                                      std::span<const int> labels);

// Rows of `table` ([V, D]) for `ids` laid out as [batch, seq_len]; result
// is [batch, seq_len, D]. Rows equal to `pad_id` receive no gradient.
template <typename T>
BasicTensor<T> embedding(std::span<const std::int32_t> ids, std::size_t batch,
                         std::size_t seq_len, const BasicTensor<T>& table,
                         std::int32_t pad_id = 0);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

}  // namespace dwenet::ops
