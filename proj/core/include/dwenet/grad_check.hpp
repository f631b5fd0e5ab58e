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
#include <functional>
#include <span>
#include <string>

#include "dwenet/tensor.hpp"

namespace dwenet {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_input;  // "input[i][j]" of the worst coordinate
  std::size_t coordinates = 0;
  bool passed = true;
};

// Compares reverse-mode gradients with central differences.
//
// `fn` recomputes the output from the current values of `inputs` (leaf
// tensors with requires_grad). Vector outputs are contracted with fixed
// pseudo-random weights drawn from `seed`. Relative error per coordinate
// is |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
GradCheckReport grad_check(const std::function<Tensor64()>& fn,
                           std::span<Tensor64> inputs, double tol,
                           double step = 1e-5, std::uint64_t seed = 7);

}  // namespace dwenet
