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

#include <fstream>

#include "dwenet/config.hpp"
#include "synthetic.hpp"

namespace dwenet {
namespace {

TEST(ConfigJsonTest, EmptyObjectGivesDefaults) {
  const auto c = config_from_json("{}");
  EXPECT_EQ(c, TrainConfig{});
  EXPECT_EQ(c.model.block_sizes, (std::array<std::size_t, 4>{6, 12, 24, 16}));
  EXPECT_EQ(c.model.growth_rate, 32u);
  EXPECT_EQ(c.model.embed_dim, 50u);
  EXPECT_EQ(c.model.max_len, 64u);
  EXPECT_EQ(c.model.dropout_rate, 0.2);
  EXPECT_EQ(c.optimizer.lr_max, 1e-3);
  EXPECT_EQ(c.optimizer.weight_decay, 1e-2);
  EXPECT_EQ(c.training.batch_size, 64u);
  EXPECT_EQ(c.training.runs, 20u);
  EXPECT_EQ(c.data.split_seed, 42u);
}

TEST(ConfigJsonTest, RoundTripPreservesEveryField) {
  TrainConfig c;
  c.model.connectivity = model::Connectivity::kResidual;
  c.model.block_sizes = {3, 4, 6, 3};
  c.model.head_dims = {64};
  c.model.embedding_trainable = false;
  c.optimizer.decoupled_weight_decay = false;
  c.optimizer.lr_max = 0.1 + 0.2;  // not exactly representable in short form
  c.data.dataset = DatasetKind::kSarcPol;
  c.data.test_path = "a \"quoted\" path";
  c.training.seed = 18446744073709551615ull;
  EXPECT_EQ(config_from_json(to_json(c)), c);
}

TEST(ConfigJsonTest, UnknownAndMistypedKeysAreRejected) {
  try {
    config_from_json(R"({"model": {"growth_rat": 12}})");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.growth_rat"), std::string::npos);
  }
  EXPECT_THROW(config_from_json(R"({"modle": {}})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"model": {"growth_rate": "big"}})"),
               ConfigError);
  EXPECT_THROW(config_from_json(R"({"model": {"block_sizes": [1, 2]}})"),
               ConfigError);
  EXPECT_THROW(config_from_json("[1, 2"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"model": {"dropout_rate": 1.5}})"),
               ConfigError);
}

TEST(ConfigOverrideTest, DottedAssignments) {
  TrainConfig c;
  apply_override(c, "model.growth_rate=12");
  EXPECT_EQ(c.model.growth_rate, 12u);
  apply_override(c, "model.connectivity=plain");
  EXPECT_EQ(c.model.connectivity, model::Connectivity::kPlain);
  apply_override(c, "model.block_sizes=[1,1,1,1]");
  EXPECT_EQ(c.model.block_sizes, (std::array<std::size_t, 4>{1, 1, 1, 1}));
  apply_override(c, "data.dataset=\"sarc-pol\"");
  EXPECT_EQ(c.data.dataset, DatasetKind::kSarcPol);
  apply_override(c, "training.epochs=3");
  EXPECT_EQ(c.training.epochs, 3u);
  EXPECT_THROW(apply_override(c, "model.growth_rat=12"), ConfigError);
  EXPECT_THROW(apply_override(c, "growth_rate=12"), ConfigError);
  EXPECT_THROW(apply_override(c, "model.growth_rate"), ConfigError);
}

TEST(ConfigFileTest, LoadSaveAndOverrides) {
  testing::TempDir dir("cfg");
  TrainConfig c;
  c.training.epochs = 4;
  save_config(c, dir / "c.json");
  const std::vector<std::string> overrides{"training.runs=3"};
  const auto loaded = load_config(dir / "c.json", overrides);
  EXPECT_EQ(loaded.training.epochs, 4u);
  EXPECT_EQ(loaded.training.runs, 3u);
  EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
}

TEST(ConfigTest, ScheduleUsesOptimizerSection) {
  TrainConfig c;
  c.optimizer.lr_max = 2e-3;
  const auto s = c.schedule(100);
  EXPECT_EQ(s.total_steps, 100u);
  EXPECT_EQ(s.lr_max, 2e-3);
  EXPECT_EQ(s.mom_high, 0.8);
  EXPECT_EQ(s.mom_low, 0.7);
}

TEST(ConfigTest, DatasetNames) {
  for (auto k : {DatasetKind::kHeadlines, DatasetKind::kSarcPol,
                 DatasetKind::kSarcMain}) {
    EXPECT_EQ(parse_dataset_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_dataset_kind("imdb"), ConfigError);
}

}  // namespace
}  // namespace dwenet
