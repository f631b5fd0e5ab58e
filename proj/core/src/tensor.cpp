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

#include "dwenet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace dwenet {

namespace {

thread_local bool g_grad_enabled = true;

#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif

template <typename T>
bool all_finite(const std::vector<T>& v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

}  // namespace

std::string Shape::str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ", ";
    os << dims_[i];
  }
  os << ')';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks() { return g_finite_checks; }

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values,
                            bool requires_grad)
    : node_(std::make_shared<detail::Node<T>>()) {
  if (shape.numel() != values.size()) {
    throw ShapeError("tensor of shape " + shape.str() + " needs " +
                     std::to_string(shape.numel()) + " values, got " +
                     std::to_string(values.size()));
  }
  for (auto d : shape.dims()) {
    if (d == 0) throw ShapeError("zero extent in shape " + shape.str());
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  std::vector<T> values(shape.numel(), value);
  return BasicTensor(std::move(shape), std::move(values), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return BasicTensor(Shape{1}, {value}, requires_grad);
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_data() {
  if (!node_->leaf) {
    throw AutogradError("in-place write to non-leaf tensor produced by '" +
                        node_->op + "'");
  }
  return node_->value;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape().str());
  }
  return node_->value[0];
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool on) {
  if (!node_->leaf) {
    throw AutogradError("requires_grad can only be toggled on leaves");
  }
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
void BasicTensor<T>::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a scalar, got shape " + shape().str());
  }
  if (node_->consumed) {
    throw AutogradError("backward() already ran on this graph");
  }
  GradTape<T>::record(*this).replay();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = node_->shape;
  node->value = node_->value;
  return BasicTensor(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  auto copy = detach();
  copy.node_->requires_grad = node_->requires_grad;
  return copy;
}

template <typename T>
GradTape<T> GradTape<T>::record(const BasicTensor<T>& root) {
  GradTape tape;
  tape.root_ = root.node();
  if (!root.requires_grad()) return tape;

  // Iterative post-order DFS: a node is emitted after all of its inputs.
  std::unordered_set<const detail::Node<T>*> seen;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    tape.order_.push_back(node);
    stack.pop_back();
  }
  return tape;
}

template <typename T>
std::vector<std::string> GradTape<T>::op_names() const {
  std::vector<std::string> names;
  names.reserve(order_.size());
  for (const auto* n : order_) names.push_back(n->op);
  return names;
}

template <typename T>
void GradTape<T>::replay() {
  if (order_.empty()) {
    if (root_) root_->consumed = true;
    return;
  }
  auto& seed = root_->ensure_grad();
  std::fill(seed.begin(), seed.end(), T(1));
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    auto* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  for (auto* node : order_) {
    if (node->leaf) continue;
    node->backward = nullptr;
    node->inputs.clear();
    if (node != root_.get()) {
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
  root_->consumed = true;
  order_.clear();
}

template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> value,
                           std::vector<BasicTensor<T>> inputs, std::string op,
                           std::function<void(detail::Node<T>&)> backward) {
  if (finite_checks() && !all_finite(value)) {
    const bool inputs_finite =
        std::all_of(inputs.begin(), inputs.end(), [](const BasicTensor<T>& t) {
          return all_finite(t.node()->value);
        });
    if (inputs_finite) {
      throw NumericError("op '" + op + "' produced non-finite output from "
                         "finite inputs");
    }
  }
  BasicTensor<T> out(std::move(shape), std::move(value));
  auto& node = *out.node();
  node.op = std::move(op);
  node.leaf = false;
  const bool needs_grad =
      grad_enabled() &&
      std::any_of(inputs.begin(), inputs.end(),
                  [](const BasicTensor<T>& t) { return t.requires_grad(); });
  if (needs_grad) {
    node.requires_grad = true;
    node.inputs.reserve(inputs.size());
    for (auto& t : inputs) node.inputs.push_back(t.node());
    node.backward = std::move(backward);
  }
  return out;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class GradTape<float>;
template class GradTape<double>;

template BasicTensor<float> make_result<float>(
    Shape, std::vector<float>, std::vector<BasicTensor<float>>, std::string,
    std::function<void(detail::Node<float>&)>);
template BasicTensor<double> make_result<double>(
    Shape, std::vector<double>, std::vector<BasicTensor<double>>, std::string,
    std::function<void(detail::Node<double>&)>);

}  // namespace dwenet
