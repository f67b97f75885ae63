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

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "urpe/graph.hpp"
#include "urpe/tensor.hpp"

/// Central-difference gradient checking in 64-bit. The numeric side only
/// ever evaluates inference-mode forward passes, so it shares no code with
/// Graph::backward.
namespace urpe::fdcheck {

/// Relative error ||a - b|| / max(||a||, ||b||), with both norms floored so
/// that an all-zero pair compares as equal.
inline double relative_error(std::span<const double> a,
                             std::span<const double> b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

/// Central-difference gradient of a scalar function of the given leaves.
/// Independent of Graph::backward: it only ever evaluates forward passes.
using LossFn = std::function<Var<double>(Graph<double>&, std::vector<Var<double>>&)>;

inline double eval_loss(const LossFn& fn, std::vector<Tensor<double>*>& leaves) {
  Graph<double> g(Graph<double>::Mode::kInference);
  std::vector<Var<double>> vars;
  for (auto* t : leaves) vars.push_back(g.param(*t));
  return fn(g, vars)->val()[0];
}

inline std::vector<std::vector<double>> numeric_grads(
    const LossFn& fn, std::vector<Tensor<double>*> leaves, double h = 1e-5) {
  std::vector<std::vector<double>> out;
  for (auto* t : leaves) {
    std::vector<double> grad(t->size());
    for (std::size_t i = 0; i < t->size(); ++i) {
      const double saved = (*t)[i];
      (*t)[i] = saved + h;
      const double up = eval_loss(fn, leaves);
      (*t)[i] = saved - h;
      const double down = eval_loss(fn, leaves);
      (*t)[i] = saved;
      grad[i] = (up - down) / (2 * h);
    }
    out.push_back(std::move(grad));
  }
  return out;
}

inline std::vector<std::vector<double>> autodiff_grads(
    const LossFn& fn, std::vector<Tensor<double>*> leaves) {
  Graph<double> g;
  std::vector<Var<double>> vars;
  for (auto* t : leaves) {
    t->set_requires_grad(true);
    t->drop_grad();
    vars.push_back(g.param(*t));
  }
  g.backward(fn(g, vars));
  std::vector<std::vector<double>> out;
  for (auto* t : leaves) {
    auto gr = t->grad();
    out.emplace_back(gr.begin(), gr.end());
  }
  return out;
}

/// Worst per-leaf relative error between autodiff and central differences.
inline double gradcheck(const LossFn& fn, std::vector<Tensor<double>*> leaves,
                        double h = 1e-5) {
  const auto analytic = autodiff_grads(fn, leaves);
  const auto numeric = numeric_grads(fn, leaves, h);
  double worst = 0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    worst = std::max(worst, relative_error(analytic[i], numeric[i]));
  }
  return worst;
}

/// Smallest |input| over every relu on the tape of fn. Central differences
/// are meaningless within h of a kink, so callers redraw inputs until this
/// clears a margin well above h.
inline double min_relu_margin(const LossFn& fn, std::vector<Tensor<double>*>& leaves) {
  Graph<double> g;
  std::vector<Var<double>> vars;
  for (auto* t : leaves) vars.push_back(g.param(*t));
  fn(g, vars);
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& node : g.tape()) {
    if (node->op != OpKind::kRelu) continue;
    for (double v : node->inputs[0]->val().data()) margin = std::min(margin, std::abs(v));
  }
  return margin;
}

}  // namespace urpe::fdcheck
