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

#include "dwenet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "dwenet/ops.hpp"

namespace dwenet {

namespace {

double contract(const Tensor64& out, const std::vector<double>& weights) {
  double acc = 0.0;
  const auto v = out.data();
  for (std::size_t i = 0; i < v.size(); ++i) acc += v[i] * weights[i];
  return acc;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor64()>& fn,
                           std::span<Tensor64> inputs, double tol, double step,
                           std::uint64_t seed) {
  for (auto& x : inputs) {
    if (!x.is_leaf() || !x.requires_grad()) {
      throw AutogradError("grad_check inputs must be leaves with requires_grad");
    }
    x.zero_grad();
  }

  Tensor64 out = fn();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> weights(out.numel());
  for (auto& w : weights) w = u(rng);

  ops::sum(ops::mul(out, Tensor64(out.shape(), weights))).backward();
  std::vector<std::vector<double>> analytic;
  for (auto& x : inputs) {
    analytic.emplace_back(x.numel(), 0.0);
    if (x.has_grad()) std::ranges::copy(x.grad(), analytic.back().begin());
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto values = inputs[i].mutable_data();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double original = values[j];
      values[j] = original + step;
      const double plus = contract(fn(), weights);
      values[j] = original - step;
      const double minus = contract(fn(), weights);
      values[j] = original;

      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[i][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coordinates;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_input =
            "input[" + std::to_string(i) + "][" + std::to_string(j) + "]";
      }
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace dwenet
