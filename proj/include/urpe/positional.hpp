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
#include <vector>

#include "urpe/graph.hpp"
#include "urpe/tensor.hpp"

namespace urpe {

/// Learnable Toeplitz matrix stored by offset: values[k + n_max - 1] holds
/// the entry for every cell with i - j == k, k in [-(n_max - 1), n_max - 1].
/// Backs both the additive logit bias B and the URPE multiplier C.
template <class T>
class ToeplitzParam {
 public:
  ToeplitzParam(std::size_t n_max, T init);

  std::size_t n_max() const { return n_max_; }
  std::size_t degrees_of_freedom() const { return values_.size(); }

  Tensor<T>& values() { return values_; }
  const Tensor<T>& values() const { return values_; }

  // k = i - j
  T offset(std::ptrdiff_t k) const;
  void set_offset(std::ptrdiff_t k, T value);

 private:
  std::size_t offset_index(std::ptrdiff_t k) const;

  std::size_t n_max_;
  Tensor<T> values_;
};

/// n x n materialization; gradient of each offset is the sum over its
/// diagonal. n > n_max raises CapacityError.
template <class T>
Var<T> materialize_toeplitz(Graph<T>& g, ToeplitzParam<T>& p, std::size_t n,
                            bool causal = false);

template <class T>
Tensor<T> materialize_toeplitz(const ToeplitzParam<T>& p, std::size_t n,
                               bool causal = false);

/// Shaw-style relative vectors r_k, one row per offset k = i - j.
template <class T>
struct ShawRPEParam {
  ShawRPEParam(std::size_t n_max, std::size_t d_head);

  std::size_t n_max;
  Tensor<T> rel_vectors;  // (2 n_max - 1) x d_head
};

/// B[i][j] = (X_i W_Q) . r_{i-j}
template <class T>
Var<T> shaw_bias(Graph<T>& g, ShawRPEParam<T>& p, const Var<T>& x,
                 const Var<T>& w_q);

/// Same bias from precomputed queries Q = X W_Q (n x d_head).
template <class T>
Var<T> shaw_bias_from_queries(Graph<T>& g, ShawRPEParam<T>& p,
                              const Var<T>& queries);

/// Per-head Toeplitz multipliers shared by every layer. Fresh instances are
/// all ones so that a URPE model starts out identical to its RPE twin.
template <class T>
struct URPEMultiplier {
  URPEMultiplier(std::size_t heads, std::size_t n_max, bool causal = false);

  std::size_t heads() const { return per_head.size(); }
  std::size_t param_count() const;

  std::vector<ToeplitzParam<T>> per_head;
  bool causal;
};

/// Causal multipliers have exact zeros (and zero gradient) below the
/// diagonal.
template <class T>
Var<T> materialize_urpe_c(Graph<T>& g, URPEMultiplier<T>& m, std::size_t head,
                          std::size_t n);

template <class T>
Tensor<T> materialize_urpe_c(const URPEMultiplier<T>& m, std::size_t head,
                             std::size_t n);

/// New learnable scalars URPE adds with layer-shared C: H * (2 n_max - 1).
std::size_t urpe_param_count(std::size_t heads, std::size_t n_max);

/// Learnable absolute position embeddings, one row per position.
template <class T>
struct APETable {
  APETable(std::size_t n_max, std::size_t d) : embeddings({n_max, d}) {}

  Tensor<T> embeddings;
};

}  // namespace urpe
