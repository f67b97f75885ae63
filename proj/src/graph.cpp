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
#include "urpe/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "urpe/errors.hpp"
#include "urpe/kernels.hpp"

namespace urpe {

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kParam: return "param";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kAddRow: return "add_row";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kScale: return "scale";
    case OpKind::kRelu: return "relu";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kSum: return "sum";
    case OpKind::kRmsNorm: return "rms_norm";
    case OpKind::kEmbedding: return "embedding";
    case OpKind::kToeplitz: return "toeplitz";
    case OpKind::kOffsetGather: return "offset_gather";
    case OpKind::kCrossEntropy: return "cross_entropy";
  }
  return "?";
}

namespace {

template <class T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_string(t.shape()));
  }
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <class T>
void require_finite(std::span<const T> xs, const char* op) {
  if (!kernels::active<T>().all_finite(xs.data(), xs.size())) {
    throw NumericError(std::string(op) + ": non-finite value encountered");
  }
}

template <class T>
Storage<T> transposed(std::span<const T> src, std::size_t rows,
                      std::size_t cols) {
  Storage<T> out(src.size());
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = src[i * cols + j];
  }
  return out;
}

template <class T>
std::span<T> grad_of(Node<T>& n) {
  if (n.grad.size() != n.val().size()) n.grad.assign(n.val().size(), T{0});
  return n.grad;
}

}  // namespace

template <class T>
Var<T> Graph<T>::make(OpKind op, Tensor<T> value, std::vector<Var<T>> inputs) {
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  node->value = std::move(value);
  if (recording()) {
    node->needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                   [](const Var<T>& v) { return v->needs_grad; });
    node->inputs = std::move(inputs);
    tape_.push_back(node);
  }
  return node;
}

template <class T>
Var<T> Graph<T>::param(Tensor<T>& t) {
  auto node = std::make_shared<Node<T>>();
  node->op = OpKind::kParam;
  node->source = &t;
  if (recording() && t.requires_grad()) {
    node->needs_grad = true;
    node->grad_sink = resolver_ ? resolver_(t) : t.grad().data();
    tape_.push_back(node);
  }
  return node;
}

template <class T>
Var<T> Graph<T>::constant(Tensor<T> t) {
  auto node = std::make_shared<Node<T>>();
  node->op = OpKind::kConstant;
  node->value = std::move(t);
  return node;
}

template <class T>
Var<T> Graph<T>::matmul(const Var<T>& a, const Var<T>& b) {
  const auto& av = a->val();
  const auto& bv = b->val();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions disagree, " +
                         shape_string(av.shape()) + " @ " +
                         shape_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), p = bv.cols();
  Tensor<T> out({m, p});
  kernels::active<T>().gemm(m, k, p, av.data().data(), bv.data().data(),
                            out.data().data());
  require_finite<T>(out.data(), "matmul");
  return make(OpKind::kMatmul, std::move(out), {a, b});
}

template <class T>
Var<T> Graph<T>::transpose(const Var<T>& a) {
  const auto& av = a->val();
  require_matrix(av, "transpose");
  const std::size_t m = av.rows(), p = av.cols();
  auto data = transposed<T>(av.data(), m, p);
  Tensor<T> out({p, m}, std::span<const T>(data.data(), data.size()));
  return make(OpKind::kTranspose, std::move(out), {a});
}

template <class T>
Var<T> Graph<T>::add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->val(), b->val(), "add");
  Tensor<T> out(a->val().shape());
  kernels::active<T>().add(a->val().data().data(), b->val().data().data(),
                           out.data().data(), out.size());
  return make(OpKind::kAdd, std::move(out), {a, b});
}

template <class T>
Var<T> Graph<T>::mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->val(), b->val(), "mul");
  Tensor<T> out(a->val().shape());
  kernels::active<T>().mul(a->val().data().data(), b->val().data().data(),
                           out.data().data(), out.size());
  return make(OpKind::kMul, std::move(out), {a, b});
}

template <class T>
Var<T> Graph<T>::add_row(const Var<T>& x, const Var<T>& v) {
  const auto& xv = x->val();
  require_matrix(xv, "add_row");
  if (v->val().size() != xv.cols()) {
    throw DimensionError("add_row: vector " + shape_string(v->val().shape()) +
                         " does not match matrix " + shape_string(xv.shape()));
  }
  Tensor<T> out(xv.shape());
  const std::size_t m = xv.rows(), p = xv.cols();
  const T* vp = v->val().data().data();
  for (std::size_t i = 0; i < m; ++i) {
    kernels::active<T>().add(xv.data().data() + i * p, vp,
                             out.data().data() + i * p, p);
  }
  return make(OpKind::kAddRow, std::move(out), {x, v});
}

template <class T>
Var<T> Graph<T>::add_scalar(const Var<T>& x, const Var<T>& s) {
  if (s->val().size() != 1) {
    throw DimensionError("add_scalar: expected a single element, got " +
                         shape_string(s->val().shape()));
  }
  const T c = s->val()[0];
  Tensor<T> out(x->val().shape());
  auto src = x->val().data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] + c;
  return make(OpKind::kAddScalar, std::move(out), {x, s});
}

template <class T>
Var<T> Graph<T>::scale(const Var<T>& x, T factor) {
  Tensor<T> out(x->val().shape());
  auto src = x->val().data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] * factor;
  auto node = make(OpKind::kScale, std::move(out), {x});
  node->scalar = factor;
  return node;
}

template <class T>
Var<T> Graph<T>::relu(const Var<T>& x) {
  Tensor<T> out(x->val().shape());
  auto src = x->val().data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] > T{0} ? src[i] : T{0};
  return make(OpKind::kRelu, std::move(out), {x});
}

template <class T>
Var<T> Graph<T>::softmax_rows(const Var<T>& x) {
  const auto& xv = x->val();
  require_matrix(xv, "softmax_rows");
  require_finite<T>(xv.data(), "softmax_rows");
  const std::size_t m = xv.rows(), p = xv.cols();
  const auto& k = kernels::active<T>();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = xv.data().data() + i * p;
    T* dst = out.data().data() + i * p;
    const T mx = k.max(row, p);
    const T total = k.exp_shift(row, mx, dst, p);
    const T inv = T{1} / total;
    for (std::size_t j = 0; j < p; ++j) dst[j] *= inv;
  }
  return make(OpKind::kSoftmaxRows, std::move(out), {x});
}

template <class T>
Var<T> Graph<T>::sum(const Var<T>& x) {
  T total{0};
  for (T v : x->val().data()) total += v;
  return make(OpKind::kSum, Tensor<T>::scalar(total), {x});
}

template <class T>
Var<T> Graph<T>::rms_norm(const Var<T>& x, const Var<T>& gain, T eps) {
  const auto& xv = x->val();
  require_matrix(xv, "rms_norm");
  const std::size_t m = xv.rows(), p = xv.cols();
  if (gain->val().size() != p) {
    throw DimensionError("rms_norm: gain " + shape_string(gain->val().shape()) +
                         " does not match " + shape_string(xv.shape()));
  }
  Tensor<T> out(xv.shape());
  Storage<T> inv_rms(m);
  const T* g = gain->val().data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = xv.data().data() + i * p;
    T ms{0};
    for (std::size_t j = 0; j < p; ++j) ms += row[j] * row[j];
    ms /= static_cast<T>(p);
    inv_rms[i] = T{1} / std::sqrt(ms + eps);
    T* dst = out.data().data() + i * p;
    for (std::size_t j = 0; j < p; ++j) dst[j] = row[j] * inv_rms[i] * g[j];
  }
  auto node = make(OpKind::kRmsNorm, std::move(out), {x, gain});
  if (recording()) node->saved = std::move(inv_rms);
  return node;
}

template <class T>
Var<T> Graph<T>::embedding(const Var<T>& table, std::span<const int> ids) {
  const auto& tv = table->val();
  require_matrix(tv, "embedding");
  const std::size_t vocab = tv.rows(), d = tv.cols();
  if (ids.empty()) throw InputError("embedding: empty id sequence");
  Tensor<T> out({ids.size(), d});
  std::vector<std::size_t> rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw InputError("embedding: token id " + std::to_string(ids[i]) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
    rows[i] = static_cast<std::size_t>(ids[i]);
    std::copy_n(tv.data().data() + rows[i] * d, d, out.data().data() + i * d);
  }
  auto node = make(OpKind::kEmbedding, std::move(out), {table});
  if (recording()) node->index = std::move(rows);
  return node;
}

template <class T>
Var<T> Graph<T>::toeplitz(const Var<T>& values, std::size_t n, bool causal) {
  const std::size_t len = values->val().size();
  if (len % 2 == 0) {
    throw DimensionError("toeplitz: offset vector must have odd length, got " +
                         std::to_string(len));
  }
  const std::size_t n_max = (len + 1) / 2;
  if (n == 0) throw DimensionError("toeplitz: size must be positive");
  if (n > n_max) {
    throw CapacityError("toeplitz: sequence length " + std::to_string(n) +
                        " exceeds capacity " + std::to_string(n_max));
  }
  const T* v = values->val().data().data();
  Tensor<T> out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (causal && i > j) continue;
      out.at(i, j) = v[i + n_max - 1 - j];
    }
  }
  auto node = make(OpKind::kToeplitz, std::move(out), {values});
  node->index = {n_max, causal ? std::size_t{1} : std::size_t{0}};
  return node;
}

template <class T>
Var<T> Graph<T>::offset_gather(const Var<T>& m) {
  const auto& mv = m->val();
  require_matrix(mv, "offset_gather");
  const std::size_t n = mv.rows(), width = mv.cols();
  if (width % 2 == 0) {
    throw DimensionError("offset_gather: offset axis must be odd, got " +
                         shape_string(mv.shape()));
  }
  const std::size_t n_max = (width + 1) / 2;
  if (n > n_max) {
    throw CapacityError("offset_gather: sequence length " + std::to_string(n) +
                        " exceeds capacity " + std::to_string(n_max));
  }
  Tensor<T> out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = mv.at(i, i + n_max - 1 - j);
  }
  auto node = make(OpKind::kOffsetGather, std::move(out), {m});
  node->index = {n_max};
  return node;
}

template <class T>
Var<T> Graph<T>::cross_entropy(const Var<T>& logits,
                               std::span<const int> targets) {
  const auto& lv = logits->val();
  require_matrix(lv, "cross_entropy");
  require_finite<T>(lv.data(), "cross_entropy");
  const std::size_t m = lv.rows(), p = lv.cols();
  if (targets.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + shape_string(lv.shape()));
  }
  const auto& k = kernels::active<T>();
  Storage<T> probs(m * p);
  std::vector<std::size_t> labels(m);
  T loss{0};
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= p) {
      throw InputError("cross_entropy: target " + std::to_string(targets[i]) +
                       " outside " + std::to_string(p) + " labels");
    }
    labels[i] = static_cast<std::size_t>(targets[i]);
    const T* row = lv.data().data() + i * p;
    T* pr = probs.data() + i * p;
    const T mx = k.max(row, p);
    const T total = k.exp_shift(row, mx, pr, p);
    const T inv = T{1} / total;
    for (std::size_t j = 0; j < p; ++j) pr[j] *= inv;
    loss += std::log(total) + mx - row[labels[i]];
  }
  auto node = make(OpKind::kCrossEntropy,
                   Tensor<T>::scalar(loss / static_cast<T>(m)), {logits});
  if (recording()) {
    node->saved = std::move(probs);
    node->index = std::move(labels);
  }
  return node;
}

template <class T>
void Graph<T>::backward(const Var<T>& loss) {
  if (!recording()) {
    throw ContractError("backward: graph was built in inference mode");
  }
  if (loss->val().size() != 1) {
    throw ContractError("backward: loss must be a scalar, got " +
                        shape_string(loss->val().shape()));
  }
  if (!loss->needs_grad) return;
  for (auto& node : tape_) node->grad.clear();
  grad_of(*loss)[0] = T{1};
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    Node<T>& node = **it;
    if (!node.needs_grad || node.grad.empty()) continue;
    if (node.op == OpKind::kParam) {
      if (node.grad_sink != nullptr) {
        kernels::active<T>().axpy(T{1}, node.grad.data(), node.grad_sink,
                                  node.grad.size());
      }
      continue;
    }
    propagate(node);
  }
}

template <class T>
void Graph<T>::propagate(Node<T>& node) {
  const auto& k = kernels::active<T>();
  const std::span<const T> g = node.grad;
  auto wants = [&](std::size_t i) { return node.inputs[i]->needs_grad; };

  switch (node.op) {
    case OpKind::kParam:
    case OpKind::kConstant:
      break;
    case OpKind::kMatmul: {
      const auto& a = node.inputs[0]->val();
      const auto& b = node.inputs[1]->val();
      const std::size_t m = a.rows(), kk = a.cols(), p = b.cols();
      if (wants(0)) {
        k.gemm_nt(m, p, kk, g.data(), b.data().data(),
                  grad_of(*node.inputs[0]).data());
      }
      if (wants(1)) {
        k.gemm_tn(kk, m, p, a.data().data(), g.data(),
                  grad_of(*node.inputs[1]).data());
      }
      break;
    }
    case OpKind::kTranspose: {
      if (!wants(0)) break;
      const auto& out = node.value;
      auto back = transposed<T>(g, out.rows(), out.cols());
      k.axpy(T{1}, back.data(), grad_of(*node.inputs[0]).data(), back.size());
      break;
    }
    case OpKind::kAdd:
      for (std::size_t i = 0; i < 2; ++i) {
        if (wants(i)) k.axpy(T{1}, g.data(), grad_of(*node.inputs[i]).data(), g.size());
      }
      break;
    case OpKind::kMul: {
      Storage<T> tmp(g.size());
      for (std::size_t i = 0; i < 2; ++i) {
        if (!wants(i)) continue;
        k.mul(g.data(), node.inputs[1 - i]->val().data().data(), tmp.data(), g.size());
        k.axpy(T{1}, tmp.data(), grad_of(*node.inputs[i]).data(), g.size());
      }
      break;
    }
    case OpKind::kAddRow: {
      const std::size_t m = node.value.rows(), p = node.value.cols();
      if (wants(0)) k.axpy(T{1}, g.data(), grad_of(*node.inputs[0]).data(), g.size());
      if (wants(1)) {
        auto gv = grad_of(*node.inputs[1]);
        for (std::size_t i = 0; i < m; ++i) k.axpy(T{1}, g.data() + i * p, gv.data(), p);
      }
      break;
    }
    case OpKind::kAddScalar: {
      if (wants(0)) k.axpy(T{1}, g.data(), grad_of(*node.inputs[0]).data(), g.size());
      if (wants(1)) {
        T total{0};
        for (T v : g) total += v;
        grad_of(*node.inputs[1])[0] += total;
      }
      break;
    }
    case OpKind::kScale:
      if (wants(0)) k.axpy(node.scalar, g.data(), grad_of(*node.inputs[0]).data(), g.size());
      break;
    case OpKind::kRelu: {
      if (!wants(0)) break;
      auto gx = grad_of(*node.inputs[0]);
      auto x = node.inputs[0]->val().data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > T{0}) gx[i] += g[i];
      }
      break;
    }
    case OpKind::kSoftmaxRows: {
      if (!wants(0)) break;
      const std::size_t m = node.value.rows(), p = node.value.cols();
      auto gx = grad_of(*node.inputs[0]);
      const T* y = node.value.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        const T inner = k.dot(g.data() + i * p, y + i * p, p);
        for (std::size_t j = 0; j < p; ++j) {
          gx[i * p + j] += y[i * p + j] * (g[i * p + j] - inner);
        }
      }
      break;
    }
    case OpKind::kSum: {
      if (!wants(0)) break;
      auto gx = grad_of(*node.inputs[0]);
      for (auto& v : gx) v += g[0];
      break;
    }
    case OpKind::kRmsNorm: {
      const auto& x = node.inputs[0]->val();
      const auto& gain = node.inputs[1]->val();
      const std::size_t m = x.rows(), p = x.cols();
      std::span<T> gx = wants(0) ? grad_of(*node.inputs[0]) : std::span<T>{};
      std::span<T> gg = wants(1) ? grad_of(*node.inputs[1]) : std::span<T>{};
      for (std::size_t i = 0; i < m; ++i) {
        const T r = node.saved[i];
        const T* xr = x.data().data() + i * p;
        const T* gr = g.data() + i * p;
        T proj{0};
        for (std::size_t j = 0; j < p; ++j) {
          const T xh = xr[j] * r;
          if (!gg.empty()) gg[j] += gr[j] * xh;
          proj += gr[j] * gain[j] * xh;
        }
        if (gx.empty()) continue;
        proj /= static_cast<T>(p);
        for (std::size_t j = 0; j < p; ++j) {
          gx[i * p + j] += r * (gr[j] * gain[j] - xr[j] * r * proj);
        }
      }
      break;
    }
    case OpKind::kEmbedding: {
      if (!wants(0)) break;
      const std::size_t d = node.value.cols();
      auto gt = grad_of(*node.inputs[0]);
      for (std::size_t i = 0; i < node.index.size(); ++i) {
        k.axpy(T{1}, g.data() + i * d, gt.data() + node.index[i] * d, d);
      }
      break;
    }
    case OpKind::kToeplitz: {
      if (!wants(0)) break;
      const std::size_t n = node.value.rows();
      const std::size_t n_max = node.index[0];
      const bool causal = node.index[1] != 0;
      auto gv = grad_of(*node.inputs[0]);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = causal ? i : 0; j < n; ++j) {
          gv[i + n_max - 1 - j] += g[i * n + j];
        }
      }
      break;
    }
    case OpKind::kOffsetGather: {
      if (!wants(0)) break;
      const std::size_t n = node.value.rows();
      const std::size_t n_max = node.index[0];
      const std::size_t width = 2 * n_max - 1;
      auto gm = grad_of(*node.inputs[0]);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) gm[i * width + i + n_max - 1 - j] += g[i * n + j];
      }
      break;
    }
    case OpKind::kCrossEntropy: {
      if (!wants(0)) break;
      const auto& lv = node.inputs[0]->val();
      const std::size_t m = lv.rows(), p = lv.cols();
      const T s = g[0] / static_cast<T>(m);
      auto gl = grad_of(*node.inputs[0]);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
          const T onehot = j == node.index[i] ? T{1} : T{0};
          gl[i * p + j] += s * (node.saved[i * p + j] - onehot);
        }
      }
      break;
    }
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace urpe
