/*
 * Copyright 2026 The LoopCTR Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef LOOPCTR_AUTOGRAD_H_
#define LOOPCTR_AUTOGRAD_H_

#include <functional>
#include <memory>
#include <vector>

#include "loopctr/tensor.h"

namespace loopctr::ag {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  // Allocates a zero gradient with the value's shape on first use.
  Tensor& grad_buffer();
  bool has_grad() const { return !grad.empty(); }
};

// Handle to a node of the reverse-mode tape. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var parameter(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->has_grad(); }
  // Gradient accumulated by backward(); zeros if none was produced.
  Tensor grad() const;
  void zero_grad() { node_->grad = Tensor(); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Disables tape recording on this thread for the lifetime of the guard.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

// Wraps `value` as the output of an op. The backward closure is only kept
// when recording is enabled and at least one parent needs a gradient.
Var make_result(Tensor value, std::vector<Var> parents,
                std::function<void(Node&)> backward_fn);

// Accumulates d(root)/d(node) into every reachable node that requires a
// gradient. `root` must hold a single element.
void backward(const Var& root);

}  // namespace loopctr::ag

#endif  // LOOPCTR_AUTOGRAD_H_
