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

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dwenet/errors.hpp"

namespace dwenet {

// Ordered list of positive extents, row-major.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : dims_(dims) {}
  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {}

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  std::size_t back() const { return dims_.back(); }
  const std::vector<std::size_t>& dims() const { return dims_; }

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : dims_) n *= d;
    return n;
  }

  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

enum class Mode { kTrain, kEval };

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// When enabled, every primitive verifies that a forward pass over finite
// inputs produced finite outputs. On by default in builds without NDEBUG.
void set_finite_checks(bool enabled);
bool finite_checks();

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads `self.grad` and accumulates into the grads of `self.inputs`.
  std::function<void(Node& self)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

// Reference-counted handle to a node in the autograd graph. Copies share
// storage; use `clone()` for an independent leaf.
template <typename T>
class BasicTensor {
 public:
  using Scalar = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  BasicTensor() = default;
  BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t rank() const { return node_->shape.rank(); }

  std::span<const T> data() const { return node_->value; }
  // Mutation is reserved for leaves (parameter init, optimizer updates).
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  bool is_leaf() const { return node_->leaf; }
  const std::string& op_name() const { return node_->op; }

  // Reverse-mode sweep from this scalar. Each graph supports one sweep;
  // a second call on the same root throws AutogradError.
  void backward() const;

  BasicTensor detach() const;
  BasicTensor clone() const;

  const NodePtr& node() const { return node_; }
  explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}

 private:
  NodePtr node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Topologically ordered record of the primitive ops reachable from a root.
template <typename T>
class GradTape {
 public:
  static GradTape record(const BasicTensor<T>& root);

  std::size_t size() const { return order_.size(); }
  bool empty() const { return order_.empty(); }
  std::vector<std::string> op_names() const;

  // Seeds d(root)/d(root) = 1 and runs every recorded VJP in reverse.
  // Intermediate grads and closures are released afterwards.
  void replay();

 private:
  std::shared_ptr<detail::Node<T>> root_;
  std::vector<detail::Node<T>*> order_;  // inputs before outputs
};

// Builds an op output node. Records `backward` only when grad mode is on and
// some input requires grad.
template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> value,
                           std::vector<BasicTensor<T>> inputs, std::string op,
                           std::function<void(detail::Node<T>&)> backward);

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;
extern template class GradTape<float>;
extern template class GradTape<double>;

}  // namespace dwenet
