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
#include <span>
#include <string>
#include <vector>

#include "dwenet/ops.hpp"
#include "dwenet/tensor.hpp"

namespace dwenet {

// A named trainable (or frozen) tensor owned by a model.
template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  bool trainable = true;
  bool decay = true;
  // Row 0 (the padding embedding) is never updated or decayed.
  bool frozen_pad_row = false;
};

namespace optim {

using ops::Rng;

// Zero-mean normal samples with std sqrt(2 / fan_in).
template <typename T>
BasicTensor<T> he_init(Shape shape, std::size_t fan_in, Rng& rng,
                       bool requires_grad = true);

struct OneCycleSpec {
  double lr_max = 1e-3;
  std::size_t total_steps = 1;
  double pct_up = 0.3;
  double div = 25.0;
  double final_div = 1e4;
  double mom_high = 0.8;
  double mom_low = 0.7;
};

struct ScheduleValue {
  double lr;
  double momentum;
};

// Cosine interpolation from `start` (pct 0) to `end` (pct 1).
double cosine_anneal(double start, double end, double pct);

// Two cosine phases: lr rises lr_max/div -> lr_max over the first
// pct_up * total_steps steps and then decays to lr_max / (div * final_div);
// momentum moves mom_high -> mom_low -> mom_high in lockstep.
ScheduleValue one_cycle(double step, const OneCycleSpec& spec);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.0;
  bool decoupled = true;  // AdamW; false adds weight_decay * p to the grad
};

template <typename T>
struct AdamMoments {
  std::string name;
  std::vector<T> m;
  std::vector<T> v;

  friend bool operator==(const AdamMoments&, const AdamMoments&) = default;
};

template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  std::vector<AdamMoments<T>> moments;  // created lazily, matched by name

  AdamMoments<T>& moments_for(const Parameter<T>& p);
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One bias-corrected Adam update over every trainable parameter. A missing
// gradient buffer counts as zeros.
template <typename T>
void adam_step(std::span<Parameter<T>> params, AdamState<T>& state,
               const AdamHyper& hyper);

}  // namespace optim
}  // namespace dwenet
