// Copyright 2026 The urpe-lab Authors
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
#include <memory>
#include <span>
#include <vector>

#include "urpe/tensor.hpp"

namespace urpe {

enum class OpKind {
  kParam,
  kConstant,
  kMatmul,
  kTranspose,
  kAdd,
  kMul,
  kAddRow,
  kAddScalar,
  kScale,
  kRelu,
  kSoftmaxRows,
  kSum,
  kRmsNorm,
  kEmbedding,
  kToeplitz,
  kOffsetGather,
  kCrossEntropy,
};

const char* op_name(OpKind op);

template <class T>
struct Node {
  OpKind op = OpKind::kConstant;
  Tensor<T> value;
  // Parameter leaves read their value through source and deposit their
  // gradient into grad_sink; both are null for every other node.
  const Tensor<T>* source = nullptr;
  T* grad_sink = nullptr;
  Storage<T> grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::vector<std::size_t> index;
  Storage<T> saved;
  T scalar{0};
  bool needs_grad = false;

  const Tensor<T>& val() const { return source ? *source : value; }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

/// Define-by-run tape. Every op evaluates eagerly and, in training mode,
/// appends its node; backward() walks the tape in reverse insertion order.
/// A graph is single-owner; build a fresh one per forward pass.
template <class T>
class Graph {
 public:
  enum class Mode { kTrain, kInference };
  // Maps a parameter tensor to the buffer its gradient should land in.
  using SinkResolver = std::function<T*(const Tensor<T>&)>;

  explicit Graph(Mode mode = Mode::kTrain) : mode_(mode) {}

  Mode mode() const { return mode_; }
  bool recording() const { return mode_ == Mode::kTrain; }
  std::size_t size() const { return tape_.size(); }
  // Recorded nodes in insertion order (empty in inference mode).
  const std::vector<Var<T>>& tape() const { return tape_; }

  // Redirect parameter gradients, e.g. into per-worker buffers.
  void set_sink_resolver(SinkResolver resolver) {
    resolver_ = std::move(resolver);
  }

  // Binds a learnable tensor without copying it. When t.requires_grad(),
  // backward() accumulates into t.grad() (or the resolver's buffer).
  Var<T> param(Tensor<T>& t);
  // Read-only leaf that never receives a gradient.
  Var<T> constant(Tensor<T> t);

  Var<T> matmul(const Var<T>& a, const Var<T>& b);
  Var<T> transpose(const Var<T>& a);
  Var<T> add(const Var<T>& a, const Var<T>& b);
  Var<T> mul(const Var<T>& a, const Var<T>& b);
  // x[m x p] + 1 v^T for v of length p.
  Var<T> add_row(const Var<T>& x, const Var<T>& v);
  // x + s for a single-element s.
  Var<T> add_scalar(const Var<T>& x, const Var<T>& s);
  Var<T> scale(const Var<T>& x, T factor);
  Var<T> relu(const Var<T>& x);
  Var<T> softmax_rows(const Var<T>& x);
  Var<T> sum(const Var<T>& x);
  // Row-wise x / sqrt(mean(x^2) + eps) * gain.
  Var<T> rms_norm(const Var<T>& x, const Var<T>& gain, T eps = T(1e-6));
  Var<T> embedding(const Var<T>& table, std::span<const int> ids);
  // n x n matrix M[i][j] = values[(i - j) + n_max - 1], where values has
  // 2 n_max - 1 entries. When causal, cells with i > j are exactly zero and
  // pass no gradient.
  Var<T> toeplitz(const Var<T>& values, std::size_t n, bool causal = false);
  // m has shape n x (2 n_max - 1); out[i][j] = m[i][(i - j) + n_max - 1].
  Var<T> offset_gather(const Var<T>& m);
  // Mean over rows of -log softmax(logits)[row, target].
  Var<T> cross_entropy(const Var<T>& logits, std::span<const int> targets);

  // Requires a single-element loss. Populates gradients of every parameter
  // leaf reachable from it.
  void backward(const Var<T>& loss);

 private:
  Var<T> make(OpKind op, Tensor<T> value, std::vector<Var<T>> inputs);
  void propagate(Node<T>& node);

  Mode mode_;
  SinkResolver resolver_;
  std::vector<Var<T>> tape_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace urpe
