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

#include "dwenet/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace dwenet::optim {

template <typename T>
BasicTensor<T> he_init(Shape shape, std::size_t fan_in, Rng& rng,
                       bool requires_grad) {
  if (fan_in == 0) throw ConfigError("he_init: fan_in must be >= 1");
  std::normal_distribution<double> normal(
      0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<T> values(shape.numel());
  for (auto& v : values) v = static_cast<T>(normal(rng));
  return BasicTensor<T>(std::move(shape), std::move(values), requires_grad);
}

double cosine_anneal(double start, double end, double pct) {
  return end + (start - end) / 2.0 * (std::cos(std::numbers::pi * pct) + 1.0);
}

ScheduleValue one_cycle(double step, const OneCycleSpec& spec) {
  const double total = static_cast<double>(spec.total_steps);
  if (!(step >= 0.0 && step <= total)) {
    throw ConfigError("one_cycle: step " + std::to_string(step) +
                      " outside [0, " + std::to_string(spec.total_steps) + "]");
  }
  const double lr_start = spec.lr_max / spec.div;
  const double lr_end = spec.lr_max / (spec.div * spec.final_div);
  const double peak = spec.pct_up * total;
  if (step <= peak && peak > 0.0) {
    const double pct = step / peak;
    return {cosine_anneal(lr_start, spec.lr_max, pct),
            cosine_anneal(spec.mom_high, spec.mom_low, pct)};
  }
  const double span = total - peak;
  const double pct = span > 0.0 ? (step - peak) / span : 1.0;
  return {cosine_anneal(spec.lr_max, lr_end, pct),
          cosine_anneal(spec.mom_low, spec.mom_high, pct)};
}

template <typename T>
AdamMoments<T>& AdamState<T>::moments_for(const Parameter<T>& p) {
  for (auto& mo : moments) {
    if (mo.name == p.name) {
      if (mo.m.size() != p.value.numel()) {
        throw ShapeError("adam: state for '" + p.name + "' holds " +
                         std::to_string(mo.m.size()) + " values, parameter has " +
                         std::to_string(p.value.numel()));
      }
      return mo;
    }
  }
  moments.push_back({p.name, std::vector<T>(p.value.numel(), T(0)),
                     std::vector<T>(p.value.numel(), T(0))});
  return moments.back();
}

template <typename T>
void adam_step(std::span<Parameter<T>> params, AdamState<T>& state,
               const AdamHyper& h) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const T bc1 = static_cast<T>(1.0 - std::pow(h.beta1, t));
  const T bc2 = static_cast<T>(1.0 - std::pow(h.beta2, t));
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  const T lr = static_cast<T>(h.lr), eps = static_cast<T>(h.eps);

  for (auto& p : params) {
    if (!p.trainable) continue;
    auto& mo = state.moments_for(p);
    auto values = p.value.mutable_data();
    const auto grad = p.value.grad();
    if (!grad.empty() && grad.size() != values.size()) {
      throw ShapeError("adam: gradient size mismatch for '" + p.name + "'");
    }
    const T wd = p.decay ? static_cast<T>(h.weight_decay) : T(0);
    const T shrink = h.decoupled ? T(1) - lr * wd : T(1);
    const std::size_t begin =
        p.frozen_pad_row ? values.size() / p.value.dim(0) : 0;
    for (std::size_t i = begin; i < values.size(); ++i) {
      T g = grad.empty() ? T(0) : grad[i];
      if (!h.decoupled) g += wd * values[i];
      mo.m[i] = b1 * mo.m[i] + (T(1) - b1) * g;
      mo.v[i] = b2 * mo.v[i] + (T(1) - b2) * g * g;
      const T m_hat = mo.m[i] / bc1;
      const T v_hat = mo.v[i] / bc2;
      values[i] = values[i] * shrink - lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template BasicTensor<float> he_init<float>(Shape, std::size_t, Rng&, bool);
template BasicTensor<double> he_init<double>(Shape, std::size_t, Rng&, bool);
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::span<Parameter<float>>, AdamState<float>&,
                               const AdamHyper&);
template void adam_step<double>(std::span<Parameter<double>>,
                                AdamState<double>&, const AdamHyper&);

}  // namespace dwenet::optim
