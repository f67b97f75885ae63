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
#include <span>
#include <vector>

#include "urpe/graph.hpp"
#include "urpe/positional.hpp"
#include "urpe/tensor.hpp"

namespace urpe {

template <class T>
struct HeadParams {
  HeadParams(std::size_t d, std::size_t d_head);

  Tensor<T> w_q;  // d x d_head
  Tensor<T> w_k;  // d x d_head
  Tensor<T> w_v;  // d x d_head
  Tensor<T> w_o;  // d_head x d
  Tensor<T> c_k;  // d_head, added to every key row
  Tensor<T> c_v;  // single value added to every entry of X W_V
};

/// Projections for every head plus the optional construction biases. The
/// biases stay frozen at zero and unbound unless their flag is set.
template <class T>
struct AttentionParams {
  AttentionParams(std::size_t heads, std::size_t d, std::size_t d_head);

  std::size_t num_heads() const { return heads.size(); }
  void set_key_bias(bool on);
  void set_value_bias(bool on);
  void set_output_bias(bool on);
  bool key_bias() const { return key_bias_; }
  bool value_bias() const { return value_bias_; }
  bool output_bias() const { return output_bias_; }

  std::size_t d;
  std::size_t d_head;
  std::vector<HeadParams<T>> heads;
  Tensor<T> c_o;  // d
  // Divide Q K^T by sqrt(d_head). Off for every theory construction.
  bool scale_qk = false;

 private:
  bool key_bias_ = false;
  bool value_bias_ = false;
  bool output_bias_ = false;
};

enum class PEKind { kNone, kApe, kRpeToeplitz, kRpeShaw };

const char* pe_kind_name(PEKind kind);

/// Which positional carriers feed the attention logits of one layer. Spans
/// hold one entry per head for the matching RPE kind; urpe, when set, turns
/// on the entrywise C product.
template <class T>
struct PEDescriptor {
  PEKind kind = PEKind::kNone;
  std::span<ToeplitzParam<T>> toeplitz;
  std::span<ShawRPEParam<T>> shaw;
  URPEMultiplier<T>* urpe = nullptr;
};

/// softmax(X W_Q (X W_K + 1 c_K^T)^T [/ sqrt(d_H)] + B) (.) C for one head.
/// The C product is not renormalized.
template <class T>
Var<T> attn_matrix(Graph<T>& g, const Var<T>& x, AttentionParams<T>& params,
                   const PEDescriptor<T>& pe, std::size_t head);

/// The mixing term sum_h A^h (X W_V^h + c_V^h) W_O^h + 1 c_O^T, without the
/// residual. Pre-norm blocks add it to the un-normalized stream.
template <class T>
Var<T> attn_mix(Graph<T>& g, const Var<T>& x, AttentionParams<T>& params,
                const PEDescriptor<T>& pe);

/// X + attn_mix(X).
template <class T>
Var<T> attn_layer(Graph<T>& g, const Var<T>& x, AttentionParams<T>& params,
                  const PEDescriptor<T>& pe);

/// True iff every row sums to 1 within tol and no entry is below -tol.
template <class T>
bool right_stochastic_check(const Tensor<T>& a, T tol);

}  // namespace urpe
