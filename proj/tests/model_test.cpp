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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dwenet/grad_check.hpp"
#include "dwenet/model.hpp"

namespace dwenet::model {
namespace {

data::EmbeddingMatrix toy_embedding(std::size_t words, std::size_t dim,
                                    std::uint64_t seed = 3) {
  std::vector<std::string> tokens{std::string(data::kPadToken),
                                  std::string(data::kUnkToken)};
  for (std::size_t i = 0; i < words; ++i) tokens.push_back("w" + std::to_string(i));
  const auto vocab = data::Vocabulary::from_tokens(tokens);
  Rng rng(seed);
  return data::random_embeddings(vocab, dim, rng);
}

// Non-pad ids so every embedding row that is read is a trainable row.
std::vector<std::int32_t> random_ids(std::size_t n, std::size_t vocab, Rng& rng) {
  std::uniform_int_distribution<std::int32_t> pick(
      1, static_cast<std::int32_t>(vocab) - 1);
  std::vector<std::int32_t> ids(n);
  for (auto& id : ids) id = pick(rng);
  return ids;
}

ModelConfig small_config(std::size_t max_len = 16) {
  ModelConfig c;
  c.block_sizes = {1, 1, 1, 1};
  c.growth_rate = 4;
  c.init_channels = 8;
  c.embed_dim = 6;
  c.max_len = max_len;
  c.head_dims = {8, 4};
  return c;
}

template <typename T>
ConvUnit<T> make_unit(std::size_t in, std::size_t out, std::size_t width,
                      Rng& rng) {
  return ConvUnit<T>{optim::he_init<T>(Shape{out, in, width}, in * width, rng),
                     BasicTensor<T>::full(Shape{out}, T(1), true),
                     BasicTensor<T>::zeros(Shape{out}, true),
                     ops::BatchNormState<T>::make(out)};
}

// Makes eval-mode batchnorm an exact identity: mean 0, var + eps = 1.
template <typename T>
void make_bn_identity(ConvUnit<T>& unit) {
  auto var = unit.bn.running_var.mutable_data();
  std::fill(var.begin(), var.end(), static_cast<T>(1.0 - unit.bn.eps));
}

TEST(ConfigTest, PresetsAndValidation) {
  const auto c = dwenet_preset();
  EXPECT_EQ(c.connectivity, Connectivity::kDense);
  EXPECT_EQ(c.block_sizes, (std::array<std::size_t, 4>{6, 12, 24, 16}));
  EXPECT_EQ(c.growth_rate, 32u);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(depth_preset(8), (std::array<std::size_t, 4>{1, 1, 1, 1}));
  EXPECT_EQ(depth_preset(28), (std::array<std::size_t, 4>{3, 4, 6, 3}));
  EXPECT_THROW(depth_preset(9), ConfigError);
  auto bad = c;
  bad.max_len = 4;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_EQ(parse_connectivity(to_string(Connectivity::kResidual)),
            Connectivity::kResidual);
  EXPECT_THROW(parse_connectivity("sparse"), ConfigError);
}

TEST(DenseBlockTest, ChannelArithmetic) {
  EXPECT_EQ(block_output_channels(Connectivity::kDense, 64, 6, 32), 256u);
  EXPECT_EQ(block_output_channels(Connectivity::kDense, 512, 16, 32), 1024u);
  EXPECT_EQ(block_output_channels(Connectivity::kDense, 7, 0, 32), 7u);
}

TEST(DenseBlockTest, EmptyBlockReturnsInput) {
  Rng rng(1);
  auto x = optim::he_init<double>(Shape{2, 3, 5}, 1, rng, false);
  std::vector<ConvUnit<double>> none;
  const auto y = dense_block_forward<double>(x, none, Mode::kEval);
  EXPECT_EQ(y.node(), x.node());
}

TEST(DenseBlockTest, OutputStartsWithInputAndLayerInputsGrow) {
  Rng rng(2);
  const std::size_t n = 5, k = 3, layers = 4;
  std::vector<ConvUnit<double>> units;
  for (std::size_t t = 0; t < layers; ++t) {
    units.push_back(make_unit<double>(n + t * k, k, 3, rng));
  }
  auto x = optim::he_init<double>(Shape{2, n, 6}, 1, rng, false);
  const auto y = dense_block_forward<double>(x, units, Mode::kEval);
  ASSERT_EQ(y.shape(), (Shape{2, n + layers * k, 6}));
  const auto head = ops::slice_channels(y, 0, n);
  EXPECT_TRUE(std::equal(head.data().begin(), head.data().end(),
                         x.data().begin()));
  // A wrongly sized layer is caught as a shape error.
  units.push_back(make_unit<double>(n, k, 3, rng));
  EXPECT_THROW(dense_block_forward<double>(x, units, Mode::kEval), ShapeError);
}

TEST(DenseBlockTest, ChannelCountPropertyOverRandomShapes) {
  Rng rng(3);
  std::uniform_int_distribution<std::size_t> n_pick(1, 16), i_pick(0, 32),
      k_pick(1, 8);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = n_pick(rng), i = i_pick(rng), k = k_pick(rng);
    std::vector<ConvUnit<float>> units;
    for (std::size_t t = 0; t < i; ++t) {
      units.push_back(make_unit<float>(n + t * k, k, 3, rng));
    }
    auto x = optim::he_init<float>(Shape{1, n, 4}, 1, rng, false);
    const auto y = dense_block_forward<float>(x, units, Mode::kEval);
    EXPECT_EQ(y.dim(1), n + i * k) << "n=" << n << " i=" << i << " k=" << k;
    EXPECT_EQ(y.dim(1), block_output_channels(Connectivity::kDense, n, i, k));
  }
}

TEST(TransitionTest, HalvesChannelsAndSignal) {
  Rng rng(4);
  auto unit = make_unit<float>(256, 128, 1, rng);
  auto x = optim::he_init<float>(Shape{1, 256, 64}, 1, rng, false);
  EXPECT_EQ(transition_forward(x, unit, Mode::kEval).shape(),
            (Shape{1, 128, 32}));
  auto odd = make_unit<float>(7, 3, 1, rng);
  auto y = optim::he_init<float>(Shape{1, 7, 5}, 1, rng, false);
  EXPECT_EQ(transition_forward(y, odd, Mode::kEval).shape(), (Shape{1, 3, 2}));
  auto z = optim::he_init<float>(Shape{1, 7, 1}, 1, rng, false);
  EXPECT_THROW(transition_forward(z, odd, Mode::kEval), ShapeError);
}

TEST(ResidualBlockTest, ZeroBranchIsPureSkip) {
  Rng rng(5);
  BlockParams<double> block;
  block.layers.push_back(ConvUnit<double>{
      BasicTensor<double>::zeros(Shape{3, 3, 3}, true),
      BasicTensor<double>::full(Shape{3}, 1.0, true),
      BasicTensor<double>::zeros(Shape{3}, true),
      ops::BatchNormState<double>::make(3)});
  block.projections.emplace_back();
  auto x = optim::he_init<double>(Shape{2, 3, 4}, 1, rng, false);
  const auto y = residual_block_forward(x, block, Mode::kTrain);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_EQ(y.data()[i], x.data()[i]);
  }
}

TEST(ResidualBlockTest, IdentityBranchDoublesPositiveInput) {
  std::vector<double> eye(3 * 3 * 3, 0.0);
  for (std::size_t c = 0; c < 3; ++c) eye[(c * 3 + c) * 3 + 1] = 1.0;
  BlockParams<double> block;
  block.layers.push_back(ConvUnit<double>{
      BasicTensor<double>(Shape{3, 3, 3}, eye, true),
      BasicTensor<double>::full(Shape{3}, 1.0, true),
      BasicTensor<double>::zeros(Shape{3}, true),
      ops::BatchNormState<double>::make(3)});
  make_bn_identity(block.layers[0]);
  block.projections.emplace_back();
  Rng rng(6);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  std::vector<double> v(2 * 3 * 5);
  for (auto& e : v) e = u(rng);
  BasicTensor<double> x(Shape{2, 3, 5}, v);
  const auto y = residual_block_forward(x, block, Mode::kEval);
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_NEAR(y.data()[i], 2.0 * v[i], 1e-12);
  }
}

TEST(ResidualBlockTest, ProjectionHandlesWidthChange) {
  Rng rng(7);
  BlockParams<float> block;
  block.layers.push_back(make_unit<float>(6, 4, 3, rng));
  block.projections.emplace_back(optim::he_init<float>(Shape{4, 6, 1}, 6, rng));
  auto x = optim::he_init<float>(Shape{2, 6, 5}, 1, rng, false);
  EXPECT_EQ(residual_block_forward(x, block, Mode::kTrain).shape(),
            (Shape{2, 4, 5}));
  block.projections[0].reset();
  EXPECT_THROW(residual_block_forward(x, block, Mode::kTrain), ShapeError);
}

TEST(PlainBlockTest, SingleLayerMatchesDenseLayer) {
  Rng rng(8);
  std::vector<ConvUnit<float>> units{make_unit<float>(5, 4, 3, rng)};
  auto x = optim::he_init<float>(Shape{2, 5, 7}, 1, rng, false);
  const auto a = plain_block_forward<float>(x, units, Mode::kEval);
  const auto b = dense_layer_forward(x, units[0], Mode::kEval);
  EXPECT_EQ(a.shape(), (Shape{2, 4, 7}));
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(HeadTest, ConstantChannelPoolsToItself) {
  std::vector<double> v(1 * 2 * 4);
  for (std::size_t t = 0; t < 4; ++t) {
    v[t] = 3.5;
    v[4 + t] = -1.25;
  }
  BasicTensor<double> x(Shape{1, 2, 4}, v);
  // A single identity-like linear layer exposes the pooled features.
  std::vector<double> eye(4 * 4, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  std::vector<LinearUnit<double>> head{
      {BasicTensor<double>(Shape{4, 4}, eye), BasicTensor<double>::zeros(Shape{4})}};
  Rng rng(9);
  std::size_t m = 0;
  const auto y = classifier_head_forward<double>(x, head, 0.01, 0.2,
                                                 Mode::kEval, rng, &m);
  EXPECT_EQ(m, 4u);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()),
            (std::vector<double>{3.5, -1.25, 3.5, -1.25}));
}

TEST(ModelTest, DefaultShapeWalk) {
  auto config = dwenet_preset();
  const auto emb = toy_embedding(20, config.embed_dim);
  Rng rng(10);
  Model<float> model(config, emb, rng);
  const auto ids = random_ids(2 * config.max_len, emb.rows, rng);
  ForwardTrace trace;
  const auto logits = model.forward(ids, 2, Mode::kEval, rng, &trace);
  EXPECT_EQ(logits.shape(), (Shape{2, 2}));
  EXPECT_EQ(trace.stem, (Shape{2, 64, 64}));
  ASSERT_EQ(trace.block_outputs.size(), 4u);
  EXPECT_EQ(trace.block_outputs[0], (Shape{2, 256, 64}));
  EXPECT_EQ(trace.block_outputs[1], (Shape{2, 512, 32}));
  EXPECT_EQ(trace.block_outputs[2], (Shape{2, 1024, 16}));
  EXPECT_EQ(trace.block_outputs[3], (Shape{2, 1024, 8}));
  ASSERT_EQ(trace.transition_outputs.size(), 3u);
  EXPECT_EQ(trace.transition_outputs[0], (Shape{2, 128, 32}));
  EXPECT_EQ(trace.transition_outputs[1], (Shape{2, 256, 16}));
  EXPECT_EQ(trace.transition_outputs[2], (Shape{2, 512, 8}));
  EXPECT_EQ(trace.features, 2048u);
}

// Independent walk of the channel recurrence, compared with the traced model.
TEST(ModelTest, ShapeWalkMatchesRecurrenceAcrossSignalLengths) {
  for (std::size_t s : {16, 32, 64, 128}) {
    auto config = small_config(s);
    config.block_sizes = {2, 1, 3, 1};
    config.growth_rate = 3;
    const auto emb = toy_embedding(10, config.embed_dim);
    Rng rng(11);
    Model<float> model(config, emb, rng);
    const auto ids = random_ids(s, emb.rows, rng);
    ForwardTrace trace;
    model.forward(ids, 1, Mode::kEval, rng, &trace);
    std::size_t c = config.init_channels, len = s;
    for (std::size_t b = 0; b < 4; ++b) {
      c += config.block_sizes[b] * config.growth_rate;
      EXPECT_EQ(trace.block_outputs[b], (Shape{1, c, len})) << "s=" << s;
      EXPECT_EQ(len, s >> b);
      if (b < 3) {
        c /= 2;
        len /= 2;
      }
    }
    EXPECT_EQ(trace.features, 2 * c);
  }
}

TEST(ModelTest, ResidualAndPlainWidthsAreGrowthRate) {
  for (auto conn : {Connectivity::kResidual, Connectivity::kPlain}) {
    auto config = small_config();
    config.connectivity = conn;
    const auto emb = toy_embedding(10, config.embed_dim);
    Rng rng(12);
    Model<float> model(config, emb, rng);
    const auto ids = random_ids(2 * config.max_len, emb.rows, rng);
    ForwardTrace trace;
    model.forward(ids, 2, Mode::kTrain, rng, &trace);
    EXPECT_EQ(trace.block_outputs[0], (Shape{2, 4, 16}));
    EXPECT_EQ(trace.features, 2 * 4u);
  }
}

TEST(ModelTest, RejectsWronglySizedBatch) {
  const auto config = small_config();
  const auto emb = toy_embedding(10, config.embed_dim);
  Rng rng(13);
  Model<float> model(config, emb, rng);
  std::vector<std::int32_t> ids(config.max_len + 1, 2);
  EXPECT_THROW(model.forward(ids, 1, Mode::kEval, rng), ShapeError);
  auto wrong_dim = config;
  wrong_dim.embed_dim = 7;
  EXPECT_THROW(Model<float>(wrong_dim, emb, rng), ConfigError);
}

TEST(ModelTest, InitializationStatistics) {
  const auto config = dwenet_preset();
  const auto emb = toy_embedding(20, config.embed_dim);
  Rng rng(14);
  Model<float> model(config, emb, rng);
  for (const auto& p : model.parameters()) {
    if (p.name.find(".bn.weight") != std::string::npos) {
      for (float g : p.value.data()) ASSERT_EQ(g, 1.0f) << p.name;
    }
    if (p.name.find(".bias") != std::string::npos) {
      for (float b : p.value.data()) ASSERT_EQ(b, 0.0f) << p.name;
    }
  }
  // The third block's last layer: [32, 512 + 23*32, 3], ~70k samples.
  const auto& kernel = model.block(2).layers.back().kernel;
  const double fan_in = static_cast<double>(kernel.dim(1) * kernel.dim(2));
  ASSERT_GE(kernel.numel(), 10000u);
  double sum = 0.0, sq = 0.0;
  for (float w : kernel.data()) {
    sum += w;
    sq += static_cast<double>(w) * w;
  }
  const double n = static_cast<double>(kernel.numel());
  const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  EXPECT_NEAR(sd / std::sqrt(2.0 / fan_in), 1.0, 0.1);
  // Padding row of the embedding is zero.
  for (std::size_t j = 0; j < config.embed_dim; ++j) {
    EXPECT_EQ(model.embedding().data()[j], 0.0f);
  }
}

TEST(ModelTest, SameSeedGivesBitIdenticalParameters) {
  const auto config = small_config();
  const auto emb = toy_embedding(10, config.embed_dim);
  Rng a(15), b(15);
  Model<float> m1(config, emb, a), m2(config, emb, b);
  const auto t1 = m1.named_tensors(), t2 = m2.named_tensors();
  ASSERT_EQ(t1.size(), t2.size());
  for (std::size_t i = 0; i < t1.size(); ++i) {
    EXPECT_EQ(t1[i].first, t2[i].first);
    EXPECT_TRUE(std::equal(t1[i].second.data().begin(), t1[i].second.data().end(),
                           t2[i].second.data().begin()))
        << t1[i].first;
  }
}

TEST(ModelTest, EvalForwardIsPure) {
  const auto config = small_config();
  const auto emb = toy_embedding(10, config.embed_dim);
  Rng rng(16);
  Model<float> model(config, emb, rng);
  const auto ids = random_ids(3 * config.max_len, emb.rows, rng);
  const auto p1 = model.predict_proba(ids, 3);
  const auto p2 = model.predict_proba(ids, 3);
  EXPECT_TRUE(std::equal(p1.data().begin(), p1.data().end(), p2.data().begin()));
  for (std::size_t b = 0; b < 3; ++b) {
    EXPECT_NEAR(p1.data()[2 * b] + p1.data()[2 * b + 1], 1.0, 1e-6);
  }
}

TEST(ModelTest, IdenticalRowsGiveIdenticalOutputs) {
  const auto config = small_config();
  const auto emb = toy_embedding(10, config.embed_dim);
  Rng rng(17);
  Model<float> model(config, emb, rng);
  auto row = random_ids(config.max_len, emb.rows, rng);
  std::vector<std::int32_t> ids(row);
  ids.insert(ids.end(), row.begin(), row.end());
  const auto p = model.predict_proba(ids, 2);
  EXPECT_EQ(p.data()[0], p.data()[2]);
  EXPECT_EQ(p.data()[1], p.data()[3]);
}

TEST(ModelTest, PermutingBatchPermutesOutputs) {
  const auto config = small_config();
  const auto emb = toy_embedding(10, config.embed_dim);
  Rng rng(18);
  Model<float> model(config, emb, rng);
  const std::size_t B = 5, S = config.max_len;
  const auto ids = random_ids(B * S, emb.rows, rng);
  std::vector<std::size_t> perm(B);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::int32_t> permuted;
  for (auto r : perm) permuted.insert(permuted.end(), ids.begin() + r * S,
                                      ids.begin() + (r + 1) * S);
  const auto p = model.predict_proba(ids, B);
  const auto q = model.predict_proba(permuted, B);
  for (std::size_t i = 0; i < B; ++i) {
    EXPECT_EQ(q.data()[2 * i], p.data()[2 * perm[i]]);
    EXPECT_EQ(q.data()[2 * i + 1], p.data()[2 * perm[i] + 1]);
  }
}

TEST(ModelTest, PaddingRowStaysZeroAfterAnUpdate) {
  const auto config = small_config();
  const auto emb = toy_embedding(10, config.embed_dim);
  Rng rng(19);
  Model<float> model(config, emb, rng);
  std::vector<std::int32_t> ids(4 * config.max_len, data::kPadId);
  for (std::size_t i = 0; i < ids.size(); i += 3) ids[i] = 2 + (i % 5);
  const std::vector<int> labels{0, 1, 1, 0};
  auto logits = model.forward(ids, 4, Mode::kTrain, rng);
  ops::softmax_cross_entropy<float>(logits, labels).loss.backward();
  optim::AdamState<float> state;
  optim::adam_step(model.parameters(), state,
                   {.lr = 0.1, .beta1 = 0.8, .weight_decay = 0.5});
  for (std::size_t j = 0; j < config.embed_dim; ++j) {
    EXPECT_EQ(model.embedding().data()[j], 0.0f);
  }
  // A row that was used did move.
  EXPECT_NE(model.embedding().data()[2 * config.embed_dim],
            emb.values[2 * config.embed_dim]);
}

TEST(ModelTest, StaticEmbeddingIsNotUpdated) {
  auto config = small_config();
  config.embedding_trainable = false;
  const auto emb = toy_embedding(10, config.embed_dim);
  Rng rng(20);
  Model<float> model(config, emb, rng);
  EXPECT_FALSE(model.embedding().requires_grad());
  for (const auto& p : model.parameters()) {
    if (p.value.node() == model.embedding().node()) {
      EXPECT_FALSE(p.trainable);
    }
  }
}

TEST(ModelTest, EndToEndGradientCheck) {
  ModelConfig config;
  config.block_sizes = {1, 1, 1, 1};
  config.growth_rate = 2;
  config.init_channels = 4;
  config.embed_dim = 4;
  config.max_len = 8;
  config.head_dims = {6, 4};
  const auto emb = toy_embedding(12, config.embed_dim);
  Rng rng(21);
  Model<double> model(config, emb, rng);
  // Every position is a real token, so the padding row never enters the output.
  const auto ids = random_ids(3 * config.max_len, emb.rows, rng);
  std::vector<Tensor64> inputs;
  for (const auto& p : model.parameters()) {
    if (p.trainable) inputs.push_back(p.value);
  }
  const auto report = grad_check(
      [&] {
        Rng dropout_rng(99);
        return model.forward(ids, 3, Mode::kTrain, dropout_rng);
      },
      inputs, 1e-3);
  EXPECT_TRUE(report.passed) << report.max_rel_error << " at "
                             << report.worst_input;
}

TEST(ModelTest, NamedTensorsRoundTrip) {
  const auto config = small_config();
  const auto emb = toy_embedding(10, config.embed_dim);
  Rng a(22), b(23);
  Model<float> src(config, emb, a), dst(config, emb, b);
  std::vector<std::pair<std::string, std::vector<float>>> values;
  for (const auto& [name, t] : src.named_tensors()) {
    values.emplace_back(name, std::vector<float>(t.data().begin(), t.data().end()));
  }
  dst.load_named_tensors(values);
  const auto ids = random_ids(2 * config.max_len, emb.rows, a);
  const auto p = src.predict_proba(ids, 2), q = dst.predict_proba(ids, 2);
  EXPECT_TRUE(std::equal(p.data().begin(), p.data().end(), q.data().begin()));
  values.back().second.push_back(0.0f);
  EXPECT_THROW(dst.load_named_tensors(values), CheckpointError);
}

}  // namespace
}  // namespace dwenet::model
