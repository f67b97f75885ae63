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
#include "urpe/positional.hpp"

#include <string>

#include "urpe/errors.hpp"

namespace urpe {

template <class T>
ToeplitzParam<T>::ToeplitzParam(std::size_t n_max, T init)
    : n_max_(n_max), values_({2 * n_max - 1}, init) {
  if (n_max == 0) throw DimensionError("ToeplitzParam: n_max must be positive");
  values_.set_requires_grad(true);
}

template <class T>
std::size_t ToeplitzParam<T>::offset_index(std::ptrdiff_t k) const {
  const auto limit = static_cast<std::ptrdiff_t>(n_max_) - 1;
  if (k < -limit || k > limit) {
    throw CapacityError("Toeplitz offset " + std::to_string(k) +
                        " outside [-" + std::to_string(limit) + ", " +
                        std::to_string(limit) + "]");
  }
  return static_cast<std::size_t>(k + limit);
}

template <class T>
T ToeplitzParam<T>::offset(std::ptrdiff_t k) const {
  return values_[offset_index(k)];
}

template <class T>
void ToeplitzParam<T>::set_offset(std::ptrdiff_t k, T value) {
  values_[offset_index(k)] = value;
}

template <class T>
Var<T> materialize_toeplitz(Graph<T>& g, ToeplitzParam<T>& p, std::size_t n,
                            bool causal) {
  return g.toeplitz(g.param(p.values()), n, causal);
}

template <class T>
Tensor<T> materialize_toeplitz(const ToeplitzParam<T>& p, std::size_t n,
                               bool causal) {
  if (n == 0) throw DimensionError("materialize_toeplitz: n must be positive");
  if (n > p.n_max()) {
    throw CapacityError("materialize_toeplitz: sequence length " +
                        std::to_string(n) + " exceeds capacity " +
                        std::to_string(p.n_max()));
  }
  Tensor<T> out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = causal ? i : 0; j < n; ++j) {
      out.at(i, j) = p.values()[i + p.n_max() - 1 - j];
    }
  }
  return out;
}

template <class T>
ShawRPEParam<T>::ShawRPEParam(std::size_t n_max_in, std::size_t d_head)
    : n_max(n_max_in), rel_vectors({2 * n_max_in - 1, d_head}) {
  rel_vectors.set_requires_grad(true);
}

template <class T>
Var<T> shaw_bias_from_queries(Graph<T>& g, ShawRPEParam<T>& p,
                              const Var<T>& queries) {
  const auto& q = queries->val();
  if (q.rank() != 2 || q.cols() != p.rel_vectors.cols()) {
    throw DimensionError("shaw_bias: queries " + shape_string(q.shape()) +
                         " do not match relative vectors " +
                         shape_string(p.rel_vectors.shape()));
  }
  if (q.rows() > p.n_max) {
    throw CapacityError("shaw_bias: sequence length " + std::to_string(q.rows()) +
                        " exceeds capacity " + std::to_string(p.n_max));
  }
  // Row i of Q R^T holds q_i . r_k for every offset k; gather by i - j.
  auto scores = g.matmul(queries, g.transpose(g.param(p.rel_vectors)));
  return g.offset_gather(scores);
}

template <class T>
Var<T> shaw_bias(Graph<T>& g, ShawRPEParam<T>& p, const Var<T>& x,
                 const Var<T>& w_q) {
  return shaw_bias_from_queries(g, p, g.matmul(x, w_q));
}

template <class T>
URPEMultiplier<T>::URPEMultiplier(std::size_t heads, std::size_t n_max,
                                  bool causal_in)
    : causal(causal_in) {
  if (heads == 0) throw DimensionError("URPEMultiplier: need at least one head");
  per_head.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) per_head.emplace_back(n_max, T{1});
}

template <class T>
std::size_t URPEMultiplier<T>::param_count() const {
  std::size_t total = 0;
  for (const auto& p : per_head) total += p.degrees_of_freedom();
  return total;
}

template <class T>
Var<T> materialize_urpe_c(Graph<T>& g, URPEMultiplier<T>& m, std::size_t head,
                          std::size_t n) {
  if (head >= m.heads()) {
    throw ContractError("materialize_urpe_c: head " + std::to_string(head) +
                        " out of range for " + std::to_string(m.heads()) +
                        " heads");
  }
  return materialize_toeplitz(g, m.per_head[head], n, m.causal);
}

template <class T>
Tensor<T> materialize_urpe_c(const URPEMultiplier<T>& m, std::size_t head,
                             std::size_t n) {
  if (head >= m.heads()) {
    throw ContractError("materialize_urpe_c: head " + std::to_string(head) +
                        " out of range for " + std::to_string(m.heads()) +
                        " heads");
  }
  return materialize_toeplitz(m.per_head[head], n, m.causal);
}

std::size_t urpe_param_count(std::size_t heads, std::size_t n_max) {
  return heads * (2 * n_max - 1);
}

#define URPE_INSTANTIATE(T)                                                   \
  template class ToeplitzParam<T>;                                           \
  template struct ShawRPEParam<T>;                                           \
  template struct URPEMultiplier<T>;                                         \
  template Var<T> materialize_toeplitz(Graph<T>&, ToeplitzParam<T>&,         \
                                       std::size_t, bool);                   \
  template Tensor<T> materialize_toeplitz(const ToeplitzParam<T>&,           \
                                          std::size_t, bool);                \
  template Var<T> shaw_bias(Graph<T>&, ShawRPEParam<T>&, const Var<T>&,      \
                            const Var<T>&);                                  \
  template Var<T> shaw_bias_from_queries(Graph<T>&, ShawRPEParam<T>&,        \
                                         const Var<T>&);                     \
  template Var<T> materialize_urpe_c(Graph<T>&, URPEMultiplier<T>&,          \
                                     std::size_t, std::size_t);              \
  template Tensor<T> materialize_urpe_c(const URPEMultiplier<T>&,            \
                                        std::size_t, std::size_t);

URPE_INSTANTIATE(float)
URPE_INSTANTIATE(double)
#undef URPE_INSTANTIATE

}  // namespace urpe
