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

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dwenet/data.hpp"
#include "dwenet/model.hpp"
#include "dwenet/ops.hpp"

namespace {

using namespace dwenet;

Tensor random_tensor(Shape shape, ops::Rng& rng, bool grad) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(shape.numel());
  for (auto& x : v) x = n(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

// Args: batch, channels in, channels out (length 32, kernel width 3).
void BM_ConvForward(benchmark::State& state) {
  ops::Rng rng(1);
  const auto b = static_cast<std::size_t>(state.range(0));
  const auto cin = static_cast<std::size_t>(state.range(1));
  const auto cout = static_cast<std::size_t>(state.range(2));
  const auto x = random_tensor(Shape{b, cin, 32}, rng, false);
  const auto w = random_tensor(Shape{cout, cin, 3}, rng, false);
  NoGradGuard no_grad;
  for (auto _ : state) {
    auto y = ops::conv_seq(x, w, 1);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_ConvForward)->Args({64, 128, 32})->Args({64, 512, 32});

void BM_ConvForwardBackward(benchmark::State& state) {
  ops::Rng rng(1);
  const auto b = static_cast<std::size_t>(state.range(0));
  const auto cin = static_cast<std::size_t>(state.range(1));
  const auto cout = static_cast<std::size_t>(state.range(2));
  for (auto _ : state) {
    const auto x = random_tensor(Shape{b, cin, 32}, rng, true);
    const auto w = random_tensor(Shape{cout, cin, 3}, rng, true);
    ops::sum(ops::conv_seq(x, w, 1)).backward();
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_ConvForwardBackward)->Args({64, 128, 32});

// One forward/backward pass of an 8-layer dense model on a batch of 64.
void BM_TrainStep(benchmark::State& state) {
  model::ModelConfig config;
  config.block_sizes = model::depth_preset(8);
  config.growth_rate = static_cast<std::size_t>(state.range(0));
  std::vector<std::string> tokens{"<pad>", "<unk>"};
  for (int i = 0; i < 1000; ++i) tokens.push_back("w" + std::to_string(i));
  ops::Rng rng(2);
  const auto emb = data::random_embeddings(data::Vocabulary::from_tokens(tokens),
                                           config.embed_dim, rng);
  model::Model<float> m(config, emb, rng);
  constexpr std::size_t kBatch = 64;
  std::vector<std::int32_t> ids(kBatch * config.max_len, 0);
  std::vector<int> labels(kBatch);
  for (std::size_t i = 0; i < kBatch; ++i) {
    for (std::size_t t = 0; t < 12; ++t) {
      ids[i * config.max_len + t] = 2 + static_cast<std::int32_t>(rng() % 1000);
    }
    labels[i] = static_cast<int>(i % 2);
  }
  for (auto _ : state) {
    auto logits = m.forward(ids, kBatch, Mode::kTrain, rng);
    ops::softmax_cross_entropy<float>(logits, labels).loss.backward();
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * kBatch));
}
BENCHMARK(BM_TrainStep)->Arg(4)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
