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

#include <cmath>
#include <vector>

#include "dwenet/ops.hpp"
#include "dwenet/optimizer.hpp"

namespace dwenet::optim {
namespace {

OneCycleSpec spec_with(std::size_t total) {
  OneCycleSpec s;
  s.total_steps = total;
  return s;
}

Parameter<double> scalar_param(double value, double grad) {
  Parameter<double> p{"p", BasicTensor<double>(Shape{1}, {value}, true)};
  if (grad != 0.0) p.value.mutable_grad()[0] = grad;
  return p;
}

TEST(HeInitTest, TargetStdAndDeterminism) {
  Rng rng(1);
  const auto t = he_init<double>(Shape{100000}, 50, rng);
  double sum = 0.0, sq = 0.0;
  for (double v : t.data()) {
    sum += v;
    sq += v * v;
  }
  const double n = 1e5;
  const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  EXPECT_NEAR(sd / std::sqrt(2.0 / 50.0), 1.0, 0.02);
  EXPECT_NEAR(sum / n, 0.0, 0.005);

  Rng a(2), b(2);
  const auto x = he_init<float>(Shape{4, 3}, 2, a);
  const auto y = he_init<float>(Shape{4, 3}, 2, b);
  EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
  EXPECT_THROW(he_init<float>(Shape{2}, 0, a), ConfigError);
}

TEST(OneCycleTest, Endpoints) {
  const auto spec = spec_with(1000);
  const auto start = one_cycle(0, spec);
  EXPECT_DOUBLE_EQ(start.lr, 1e-3 / 25.0);
  EXPECT_DOUBLE_EQ(start.momentum, 0.8);
  const auto peak = one_cycle(300, spec);
  EXPECT_DOUBLE_EQ(peak.lr, 1e-3);
  EXPECT_DOUBLE_EQ(peak.momentum, 0.7);
  const auto end = one_cycle(1000, spec);
  EXPECT_NEAR(end.lr, 1e-3 / (25.0 * 1e4), 1e-20);
  EXPECT_DOUBLE_EQ(end.momentum, 0.8);
}

TEST(OneCycleTest, OutOfRangeStepIsRejected) {
  const auto spec = spec_with(10);
  EXPECT_THROW(one_cycle(-1, spec), ConfigError);
  EXPECT_THROW(one_cycle(10.5, spec), ConfigError);
}

TEST(OneCycleTest, MidpointOfEachPhaseIsTheArithmeticMean) {
  const auto spec = spec_with(100);
  const auto up = one_cycle(15, spec);
  EXPECT_NEAR(up.lr, (1e-3 / 25.0 + 1e-3) / 2.0, 1e-15);
  EXPECT_NEAR(up.momentum, 0.75, 1e-15);
  const auto down = one_cycle(65, spec);
  EXPECT_NEAR(down.lr, (1e-3 + 1e-3 / 25e4) / 2.0, 1e-15);
  EXPECT_NEAR(down.momentum, 0.75, 1e-15);
}

TEST(OneCycleTest, DenseGridProperties) {
  for (std::size_t total : {10u, 97u, 1000u}) {
    const auto spec = spec_with(total);
    const double dt = static_cast<double>(total) / 20000.0;
    double max_lr = 0.0, prev_lr = one_cycle(0, spec).lr;
    int peaks = 0;
    for (int i = 0; i <= 20000; ++i) {
      const double step = std::min(i * dt, static_cast<double>(total));
      const auto v = one_cycle(step, spec);
      max_lr = std::max(max_lr, v.lr);
      EXPECT_GE(v.momentum, 0.7 - 1e-15);
      EXPECT_LE(v.momentum, 0.8 + 1e-15);
      if (v.momentum == 0.7) ++peaks;
      // Continuity: neighbouring grid points never jump.
      EXPECT_LT(std::abs(v.lr - prev_lr), 1e-3 * 1e-3 + 1e-3 * 4.0 / 20000.0 * 10);
      prev_lr = v.lr;
    }
    EXPECT_NEAR(max_lr, 1e-3, 1e-12) << total;
    EXPECT_EQ(peaks, 1) << total;
  }
}

TEST(AdamTest, ZeroGradientZeroDecayLeavesParamsUnchanged) {
  std::vector<Parameter<double>> ps{scalar_param(0.375, 0.0)};
  AdamState<double> state;
  adam_step<double>(ps, state, {.lr = 0.1, .beta1 = 0.8});
  EXPECT_EQ(ps[0].value.data()[0], 0.375);
  EXPECT_EQ(state.step, 1u);
  adam_step<double>(ps, state, {.lr = 0.1, .beta1 = 0.8});
  EXPECT_EQ(state.step, 2u);
}

// Hand-executed recurrence: m = 0.2, v = 0.01, m_hat = 1, v_hat = 1.
TEST(AdamTest, FirstStepOnScalar) {
  std::vector<Parameter<double>> ps{scalar_param(1.0, 1.0)};
  AdamState<double> state;
  adam_step<double>(ps, state,
                    {.lr = 0.1, .beta1 = 0.8, .beta2 = 0.99, .eps = 1e-8});
  EXPECT_NEAR(ps[0].value.data()[0], 1.0 - 0.1 * (1.0 / (1.0 + 1e-8)), 1e-15);
  EXPECT_NEAR(ps[0].value.data()[0], 0.9, 1e-8);
  EXPECT_NEAR(state.moments[0].m[0], 0.2, 1e-15);
  EXPECT_NEAR(state.moments[0].v[0], 0.01, 1e-15);
}

TEST(AdamTest, DecoupledDecayShrinksParams) {
  std::vector<Parameter<double>> ps{scalar_param(2.0, 0.0)};
  AdamState<double> state;
  adam_step<double>(ps, state, {.lr = 1e-3, .weight_decay = 1e-2});
  EXPECT_NEAR(ps[0].value.data()[0], 2.0 * 0.99999, 1e-15);
}

TEST(AdamTest, CoupledDecayGoesThroughTheGradient) {
  std::vector<Parameter<double>> ps{scalar_param(2.0, 0.0)};
  AdamState<double> state;
  adam_step<double>(ps, state,
                    {.lr = 1e-3, .weight_decay = 1e-2, .decoupled = false});
  // g = 0.02 and the first bias-corrected step has magnitude ~lr.
  EXPECT_NEAR(ps[0].value.data()[0], 2.0 - 1e-3, 1e-9);
}

TEST(AdamTest, NoDecayAndFrozenParamsAreRespected) {
  std::vector<Parameter<double>> ps{scalar_param(2.0, 0.0), scalar_param(3.0, 1.0)};
  ps[0].decay = false;
  ps[1].name = "frozen";
  ps[1].trainable = false;
  AdamState<double> state;
  adam_step<double>(ps, state, {.lr = 1e-3, .weight_decay = 1e-2});
  EXPECT_EQ(ps[0].value.data()[0], 2.0);
  EXPECT_EQ(ps[1].value.data()[0], 3.0);
  EXPECT_EQ(state.moments.size(), 1u);
}

TEST(AdamTest, FrozenPadRowIsSkipped) {
  Parameter<double> table{"embedding",
                          BasicTensor<double>(Shape{3, 2}, {0, 0, 1, 1, 2, 2}, true),
                          true, true, true};
  auto g = table.value.mutable_grad();
  std::fill(g.begin(), g.end(), 1.0);
  std::vector<Parameter<double>> ps{table};
  AdamState<double> state;
  adam_step<double>(ps, state, {.lr = 0.1, .weight_decay = 0.1});
  EXPECT_EQ(ps[0].value.data()[0], 0.0);
  EXPECT_EQ(ps[0].value.data()[1], 0.0);
  EXPECT_LT(ps[0].value.data()[2], 1.0);
}

TEST(AdamTest, ScaledLossKeepsUpdateSigns) {
  Rng rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> init(20), grad(20);
  for (auto& v : init) v = n(rng);
  for (auto& v : grad) v = n(rng);
  std::vector<std::vector<double>> deltas;
  for (double c : {1.0, 10.0}) {
    std::vector<Parameter<double>> ps{
        {"w", BasicTensor<double>(Shape{20}, init, true)}};
    auto g = ps[0].value.mutable_grad();
    for (std::size_t i = 0; i < 20; ++i) g[i] = c * grad[i];
    AdamState<double> state;
    adam_step<double>(ps, state, {.lr = 1e-3, .beta1 = 0.8});
    std::vector<double> d(20);
    for (std::size_t i = 0; i < 20; ++i) d[i] = ps[0].value.data()[i] - init[i];
    deltas.push_back(d);
  }
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(std::signbit(deltas[0][i]), std::signbit(deltas[1][i]));
    EXPECT_NEAR(std::abs(deltas[1][i]), 1e-3, 1e-9);
  }
}

TEST(AdamTest, SecondMomentStaysNonNegative) {
  Rng rng(4);
  std::normal_distribution<double> n(0.0, 5.0);
  std::vector<Parameter<double>> ps{
      {"w", BasicTensor<double>::zeros(Shape{50}, true)}};
  AdamState<double> state;
  for (int step = 0; step < 25; ++step) {
    auto g = ps[0].value.mutable_grad();
    for (auto& v : g) v = n(rng);
    adam_step<double>(ps, state, {.lr = 1e-2, .beta1 = 0.75});
    for (double v : state.moments[0].v) ASSERT_GE(v, 0.0);
  }
  EXPECT_EQ(state.step, 25u);
}

TEST(AdamTest, StateShapeMismatchIsRejected) {
  std::vector<Parameter<double>> ps{scalar_param(1.0, 1.0)};
  AdamState<double> state;
  state.moments.push_back({"p", {0.0, 0.0}, {0.0, 0.0}});
  EXPECT_THROW(adam_step<double>(ps, state, {}), ShapeError);
}

}  // namespace
}  // namespace dwenet::optim
