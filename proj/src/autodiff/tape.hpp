/*
  Copyright 2026 The protoguide Authors

  Licensed under the Apache License, Version 2.0 (the "License");
  you may not use this file except in compliance with the License.
  You may obtain a copy of the License at

  http://www.apache.org/licenses/LICENSE-2.0

  Unless required by applicable law or agreed to in writing, software
  distributed under the License is distributed on an "AS IS" BASIS,
  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
  See the License for the specific language governing permissions and
  limitations under the License.
*/

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pg::ad {

using Shape = std::vector<int>;

std::size_t numel(const Shape& s);
std::string shape_string(const Shape& s);

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense row-major arrays. Every op appends a node
// whose backward closure accumulates into its inputs' gradients; backward()
// walks the nodes in reverse creation order, which is a topological order.
//
// Layout conventions: images are [N,C,H,W]; token sequences are [N,L,D];
// linear() contracts the last axis.
template <typename T>
class Tape {
 public:
  using Vec = std::vector<T>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Shape shape, Vec value, bool requires_grad = false);
  Var constant(Shape shape, Vec value) { return leaf(std::move(shape), std::move(value), false); }

  const Shape& shape(Var v) const { return nodes_[v.id]->shape; }
  const Vec& value(Var v) const { return nodes_[v.id]->value; }
  // Zero-filled when backward never reached the node.
  const Vec& grad(Var v);
  bool requires_grad(Var v) const { return nodes_[v.id]->requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // x[N,C,H,W] * w[O,C,k,k] + b[O]
  Var conv2d(Var x, Var w, Var b, int stride, int pad);
  Var group_norm(Var x, Var gamma, Var beta, int groups, T eps = T(1e-5));
  Var silu(Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var x, T factor);
  // x[N,C,H,W] + bias[N,C] broadcast over space.
  Var add_channel_bias(Var x, Var bias);
  Var avg_pool2(Var x);
  Var upsample2(Var x);
  Var concat_channels(Var a, Var b);
  // x[..., K] * w[K, M] (+ b[M])
  Var linear(Var x, Var w, Var b = {});
  Var reshape(Var x, Shape shape);
  // [N,C,H,W] <-> [N,H*W,C]
  Var to_tokens(Var x);
  Var from_tokens(Var x, int height, int width);
  // a[N,m,k] * b[N,k,n]
  Var bmm(Var a, Var b);
  // a[N,m,k] * b[N,n,k]^T * factor
  Var bmm_nt(Var a, Var b, T factor);
  // Softmax over the last axis; additive_mask (same size, may be empty) is
  // added to the logits and receives no gradient.
  Var softmax(Var x, std::span<const T> additive_mask = {});
  // rows of table[V,E] -> [rows.size(), E]
  Var gather_rows(Var table, std::span<const int> rows);
  // mean((x - target)^2) as a scalar
  Var mse(Var x, std::span<const T> target);
  // factor * sum(weight * (x - target)^2) as a scalar; weight may be empty (all ones)
  Var weighted_sq_error(Var x, std::span<const T> target, std::span<const T> weight, T factor);
  Var sum(Var x);

  // Seeds d(root)/d(root) = 1 for a scalar root and runs all closures.
  void backward(Var root);

 private:
  struct Node {
    Shape shape;
    Vec value;
    Vec grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  Var push(Shape shape, Vec value, bool requires_grad);
  Node& node(Var v) { return *nodes_[v.id]; }
  Vec& grad_buffer(Var v);

  std::vector<std::unique_ptr<Node>> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace pg::ad
