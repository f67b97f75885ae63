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
#include "urpe/attention.hpp"

#include <cmath>
#include <string>

#include "urpe/errors.hpp"

namespace urpe {

template <class T>
HeadParams<T>::HeadParams(std::size_t d, std::size_t d_head)
    : w_q({d, d_head}),
      w_k({d, d_head}),
      w_v({d, d_head}),
      w_o({d_head, d}),
      c_k({d_head}),
      c_v({1}) {
  for (auto* t : {&w_q, &w_k, &w_v, &w_o}) t->set_requires_grad(true);
}

template <class T>
AttentionParams<T>::AttentionParams(std::size_t heads_in, std::size_t d_in,
                                    std::size_t d_head_in)
    : d(d_in), d_head(d_head_in), c_o({d_in}) {
  if (heads_in == 0 || d_in == 0 || d_head_in == 0) {
    throw DimensionError("AttentionParams: heads, d and d_head must be positive");
  }
  heads.reserve(heads_in);
  for (std::size_t h = 0; h < heads_in; ++h) heads.emplace_back(d_in, d_head_in);
}

template <class T>
void AttentionParams<T>::set_key_bias(bool on) {
  key_bias_ = on;
  for (auto& h : heads) h.c_k.set_requires_grad(on);
}

template <class T>
void AttentionParams<T>::set_value_bias(bool on) {
  value_bias_ = on;
  for (auto& h : heads) h.c_v.set_requires_grad(on);
}

template <class T>
void AttentionParams<T>::set_output_bias(bool on) {
  output_bias_ = on;
  c_o.set_requires_grad(on);
}

const char* pe_kind_name(PEKind kind) {
  switch (kind) {
    case PEKind::kNone: return "none";
    case PEKind::kApe: return "ape";
    case PEKind::kRpeToeplitz: return "rpe_toeplitz";
    case PEKind::kRpeShaw: return "rpe_shaw";
  }
  return "?";
}

template <class T>
Var<T> attn_matrix(Graph<T>& g, const Var<T>& x, AttentionParams<T>& params,
                   const PEDescriptor<T>& pe, std::size_t head) {
  if (head >= params.num_heads()) {
    throw ContractError("attn_matrix: head " + std::to_string(head) +
                        " out of range");
  }
  const auto& xv = x->val();
  if (xv.rank() != 2 || xv.cols() != params.d) {
    throw DimensionError("attn_matrix: input " + shape_string(xv.shape()) +
                         " does not have width " + std::to_string(params.d));
  }
  const std::size_t n = xv.rows();
  auto& hp = params.heads[head];

  auto queries = g.matmul(x, g.param(hp.w_q));
  auto keys = g.matmul(x, g.param(hp.w_k));
  if (params.key_bias()) keys = g.add_row(keys, g.param(hp.c_k));
  auto logits = g.matmul(queries, g.transpose(keys));
  if (params.scale_qk) {
    logits = g.scale(logits, T{1} / std::sqrt(static_cast<T>(params.d_head)));
  }

  switch (pe.kind) {
    case PEKind::kRpeToeplitz:
      if (head >= pe.toeplitz.size()) {
        throw ContractError("attn_matrix: missing Toeplitz bias for head " +
                            std::to_string(head));
      }
      logits = g.add(logits, materialize_toeplitz(g, pe.toeplitz[head], n));
      break;
    case PEKind::kRpeShaw:
      if (head >= pe.shaw.size()) {
        throw ContractError("attn_matrix: missing Shaw vectors for head " +
                            std::to_string(head));
      }
      logits = g.add(logits, shaw_bias_from_queries(g, pe.shaw[head], queries));
      break;
    case PEKind::kNone:
    case PEKind::kApe:
      break;
  }

  auto attn = g.softmax_rows(logits);
  if (pe.urpe != nullptr) {
    attn = g.mul(attn, materialize_urpe_c(g, *pe.urpe, head, n));
  }
  return attn;
}

template <class T>
Var<T> attn_mix(Graph<T>& g, const Var<T>& x, AttentionParams<T>& params,
                const PEDescriptor<T>& pe) {
  Var<T> out;
  for (std::size_t h = 0; h < params.num_heads(); ++h) {
    auto& hp = params.heads[h];
    auto attn = attn_matrix(g, x, params, pe, h);
    auto values = g.matmul(x, g.param(hp.w_v));
    if (params.value_bias()) values = g.add_scalar(values, g.param(hp.c_v));
    auto mixed = g.matmul(g.matmul(attn, values), g.param(hp.w_o));
    out = out ? g.add(out, mixed) : mixed;
  }
  if (params.output_bias()) out = g.add_row(out, g.param(params.c_o));
  return out;
}

template <class T>
Var<T> attn_layer(Graph<T>& g, const Var<T>& x, AttentionParams<T>& params,
                  const PEDescriptor<T>& pe) {
  return g.add(x, attn_mix(g, x, params, pe));
}

template <class T>
bool right_stochastic_check(const Tensor<T>& a, T tol) {
  const std::size_t n = a.rows();
  if (a.cols() != n) {
    throw DimensionError("right_stochastic_check: matrix " +
                         shape_string(a.shape()) + " is not square");
  }
  for (std::size_t i = 0; i < n; ++i) {
    T total{0};
    for (std::size_t j = 0; j < n; ++j) {
      if (a.at(i, j) < -tol) return false;
      total += a.at(i, j);
    }
    if (std::abs(total - T{1}) > tol) return false;
  }
  return true;
}

#define URPE_INSTANTIATE(T)                                                  \
  template struct HeadParams<T>;                                            \
  template struct AttentionParams<T>;                                       \
  template Var<T> attn_matrix(Graph<T>&, const Var<T>&, AttentionParams<T>&, \
                              const PEDescriptor<T>&, std::size_t);         \
  template Var<T> attn_mix(Graph<T>&, const Var<T>&, AttentionParams<T>&,    \
                           const PEDescriptor<T>&);                         \
  template Var<T> attn_layer(Graph<T>&, const Var<T>&, AttentionParams<T>&,  \
                             const PEDescriptor<T>&);                       \
  template bool right_stochastic_check(const Tensor<T>&, T);

URPE_INSTANTIATE(float)
URPE_INSTANTIATE(double)
#undef URPE_INSTANTIATE

}  // namespace urpe
