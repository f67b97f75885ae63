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
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "test_support.hpp"
#include "urpe/attention.hpp"
#include "urpe/errors.hpp"

using namespace urpe;
using urpe::testing::max_abs_diff;
using urpe::testing::random_tensor;
using G = Graph<double>;

namespace {

void randomize(AttentionParams<double>& p, std::mt19937_64& rng) {
  for (auto& h : p.heads) {
    h.w_q = random_tensor<double>(h.w_q.shape(), rng);
    h.w_k = random_tensor<double>(h.w_k.shape(), rng);
    h.w_v = random_tensor<double>(h.w_v.shape(), rng);
    h.w_o = random_tensor<double>(h.w_o.shape(), rng);
    for (auto* t : {&h.w_q, &h.w_k, &h.w_v, &h.w_o}) t->set_requires_grad(true);
  }
}

std::vector<ToeplitzParam<double>> random_bias(std::size_t heads, std::size_t n_max,
                                               std::mt19937_64& rng) {
  std::vector<ToeplitzParam<double>> out;
  for (std::size_t h = 0; h < heads; ++h) {
    out.emplace_back(n_max, 0.0);
    out.back().values() = random_tensor<double>({2 * n_max - 1}, rng);
    out.back().values().set_requires_grad(true);
  }
  return out;
}

Tensor<double> row_sums(const Tensor<double>& a) {
  Tensor<double> s({a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s[i] += a.at(i, j);
  return s;
}

}  // namespace

TEST_CASE("zero input without positional bias gives uniform attention") {
  AttentionParams<double> p(2, 3, 2);
  std::mt19937_64 rng(1);
  randomize(p, rng);
  G g;
  const auto a = attn_matrix(g, g.constant(Tensor<double>({5, 3})), p, {}, 1)->val();
  for (double v : a.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("all-ones C is bit-identical to the RPE path") {
  std::mt19937_64 rng(2);
  const std::size_t n = 6, d = 8, heads = 3;
  AttentionParams<double> p(heads, d, 4);
  randomize(p, rng);
  auto bias = random_bias(heads, 9, rng);
  std::vector<ShawRPEParam<double>> shaw;
  for (std::size_t h = 0; h < heads; ++h) {
    shaw.emplace_back(9, 4);
    shaw.back().rel_vectors = random_tensor<double>({17, 4}, rng);
  }
  URPEMultiplier<double> ones(heads, 9);
  for (auto kind : {PEKind::kNone, PEKind::kRpeToeplitz, PEKind::kRpeShaw}) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto x = random_tensor<double>({n, d}, rng);
      PEDescriptor<double> rpe{kind, bias, shaw, nullptr};
      PEDescriptor<double> urpe = rpe;
      urpe.urpe = &ones;
      G g;
      const auto a = attn_layer(g, g.constant(x), p, rpe)->val();
      const auto b = attn_layer(g, g.constant(x), p, urpe)->val();
      CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
    }
  }
}

TEST_CASE("upper-triangular C gives row sums 1, (n-1)/n, ..., 1/n") {
  for (std::size_t n : {2u, 3u, 4u, 8u}) {
    AttentionParams<double> p(1, 2, 2);
    URPEMultiplier<double> causal(1, n, true);
    PEDescriptor<double> pe;
    pe.urpe = &causal;
    G g;
    const auto a = attn_matrix(g, g.constant(Tensor<double>({n, 2})), p, pe, 0)->val();
    const auto s = row_sums(a);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(s[i] == doctest::Approx(double(n - i) / double(n)).epsilon(1e-15));
    }
    CHECK_FALSE(right_stochastic_check(a, 1e-9));
  }
}

TEST_CASE("right_stochastic_check cases") {
  CHECK(right_stochastic_check(identity<double>(4), 0.0));
  std::mt19937_64 rng(4);
  G g;
  const auto sm = g.softmax_rows(g.constant(random_tensor<double>({5, 5}, rng, -4, 4)))->val();
  CHECK(right_stochastic_check(sm, 1e-6));
  Tensor<double> neg({2, 2}, {1.5, -0.5, 0.0, 1.0});
  CHECK_FALSE(right_stochastic_check(neg, 1e-6));
  CHECK_THROWS_AS(right_stochastic_check(Tensor<double>({2, 3}), 1e-6), DimensionError);
}

TEST_CASE("RPE attention matrices are right stochastic") {
  std::mt19937_64 rng(5);
  AttentionParams<double> p(2, 6, 3);
  randomize(p, rng);
  auto bias = random_bias(2, 10, rng);
  std::vector<ShawRPEParam<double>> shaw;
  for (int h = 0; h < 2; ++h) {
    shaw.emplace_back(10, 3);
    shaw.back().rel_vectors = random_tensor<double>({19, 3}, rng);
  }
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_tensor<double>({7, 6}, rng, -2, 2);
    for (auto kind : {PEKind::kRpeToeplitz, PEKind::kRpeShaw}) {
      PEDescriptor<double> pe{kind, bias, shaw, nullptr};
      G g;
      for (std::size_t h = 0; h < 2; ++h) {
        CHECK(right_stochastic_check(attn_matrix(g, g.constant(x), p, pe, h)->val(), 1e-6));
      }
    }
  }
}

TEST_CASE("zero value path leaves the residual") {
  std::mt19937_64 rng(6);
  AttentionParams<double> p(2, 4, 3);
  randomize(p, rng);
  for (auto& h : p.heads) h.w_v.fill(0.0);
  const auto x = random_tensor<double>({5, 4}, rng);
  G g;
  const auto y = attn_layer(g, g.constant(x), p, {})->val();
  CHECK(max_abs_diff(x, y) == 0.0);
}

TEST_CASE("identical rows stay identical without positions") {
  std::mt19937_64 rng(7);
  AttentionParams<double> p(3, 5, 2);
  randomize(p, rng);
  const auto row = random_tensor<double>({5}, rng);
  Tensor<double> x({6, 5});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 5; ++j) x.at(i, j) = row[j];
  G g;
  const auto y = attn_layer(g, g.constant(x), p, {})->val();
  for (std::size_t i = 1; i < 6; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(y.at(i, j) == doctest::Approx(y.at(0, j)).epsilon(1e-14));
}

TEST_CASE("attention without positions is permutation equivariant") {
  std::mt19937_64 rng(8);
  AttentionParams<double> p(2, 4, 3);
  randomize(p, rng);
  const auto x = random_tensor<double>({6, 4}, rng);
  std::vector<std::size_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor<double> xp({6, 4});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) xp.at(i, j) = x.at(perm[i], j);
  G g;
  const auto y = attn_layer(g, g.constant(x), p, {})->val();
  const auto yp = attn_layer(g, g.constant(xp), p, {})->val();
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(yp.at(i, j) == doctest::Approx(y.at(perm[i], j)).epsilon(1e-13));
}

TEST_CASE("key bias realizes softmax(Xu(Xu - c1)^T)") {
  std::mt19937_64 rng(9);
  const std::size_t n = 5, d = 3;
  for (int trial = 0; trial < 10; ++trial) {
    const auto u = random_tensor<double>({d, 1}, rng);
    const double c = std::uniform_real_distribution<double>(-2, 2)(rng);
    const auto x = random_tensor<double>({n, d}, rng);
    AttentionParams<double> p(1, d, 1);
    p.heads[0].w_q = u;
    p.heads[0].w_k = u;
    p.set_key_bias(true);
    p.heads[0].c_k[0] = -c;
    URPEMultiplier<double> ones(1, n);
    PEDescriptor<double> pe;
    pe.urpe = &ones;
    G g;
    const auto a = attn_matrix(g, g.constant(x), p, pe, 0)->val();
    // direct formula
    std::vector<double> xu(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) xu[i] += x.at(i, k) * u[k];
    double worst = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> z(n);
      for (std::size_t j = 0; j < n; ++j) z[j] = xu[i] * (xu[j] - c);
      const double m = *std::max_element(z.begin(), z.end());
      double s = 0;
      for (auto& v : z) s += (v = std::exp(v - m));
      for (std::size_t j = 0; j < n; ++j) worst = std::max(worst, std::abs(z[j] / s - a.at(i, j)));
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("position-injection block at n = 4 injects u = (8, 6, 4, 2)") {
  const std::size_t n = 4, d = 3;
  AttentionParams<double> p(2, d, 1);
  p.set_value_bias(true);
  for (auto& h : p.heads) {
    h.c_v[0] = 4.0;  // 1 / min gap of (1, 3/4, 1/2, 1/4)
    h.w_o.fill(1.0);
  }
  URPEMultiplier<double> causal(2, n, true);
  PEDescriptor<double> pe;
  pe.urpe = &causal;
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 3; ++trial) {
    const auto x = trial == 0 ? Tensor<double>({n, d}) : random_tensor<double>({n, d}, rng);
    G g;
    const auto y = attn_layer(g, g.constant(x), p, pe)->val();
    const double u[] = {8, 6, 4, 2};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) CHECK(y.at(i, j) - x.at(i, j) == doctest::Approx(u[i]).epsilon(1e-14));
  }
}

TEST_CASE("causal C with input-independent logits hides earlier rows from later ones") {
  // Row i mixes keys j >= i only. With W_K = 0 the softmax is uniform, so
  // perturbing row j cannot reach any row i > j.
  std::mt19937_64 rng(12);
  const std::size_t n = 6, d = 4;
  AttentionParams<double> p(2, d, 3);
  randomize(p, rng);
  for (auto& h : p.heads) h.w_k.fill(0.0);
  URPEMultiplier<double> causal(2, n, true);
  PEDescriptor<double> pe;
  pe.urpe = &causal;
  const auto x = random_tensor<double>({n, d}, rng);
  G g;
  const auto base = attn_layer(g, g.constant(x), p, pe)->val();
  for (std::size_t j = 0; j < n; ++j) {
    auto xp = x;
    for (std::size_t k = 0; k < d; ++k) xp.at(j, k) += 0.5;
    const auto y = attn_layer(g, g.constant(xp), p, pe)->val();
    for (std::size_t i = j + 1; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) CHECK(std::abs(y.at(i, k) - base.at(i, k)) < 1e-12);
  }
}

TEST_CASE("attention layer gradients match finite differences") {
  // The leaves are the layer's own tensors, so the finite-difference side
  // perturbs exactly what attn_layer reads.
  std::mt19937_64 rng(13);
  const std::size_t n = 4, d = 3, n_max = 5;
  for (auto kind : {PEKind::kRpeToeplitz, PEKind::kRpeShaw}) {
    for (bool causal : {false, true}) {
      AttentionParams<double> p(2, d, 2);
      randomize(p, rng);
      p.set_key_bias(true);
      p.set_value_bias(true);
      p.set_output_bias(true);
      for (auto& h : p.heads) {
        h.c_k = random_tensor<double>({2}, rng);
        h.c_v = random_tensor<double>({1}, rng);
      }
      p.c_o = random_tensor<double>({d}, rng);
      auto bias = random_bias(2, n_max, rng);
      std::vector<ShawRPEParam<double>> shaw;
      for (int h = 0; h < 2; ++h) {
        shaw.emplace_back(n_max, 2);
        shaw.back().rel_vectors = random_tensor<double>({2 * n_max - 1, 2}, rng);
      }
      URPEMultiplier<double> c(2, n_max, causal);
      for (auto& t : c.per_head) t.values() = random_tensor<double>({2 * n_max - 1}, rng, 0.5, 1.5);
      PEDescriptor<double> pe{kind, bias, shaw, &c};
      auto x = random_tensor<double>({n, d}, rng);

      // c_k is left out: it shifts each logit row by a constant, which the
      // softmax ignores, so its true gradient is exactly zero.
      std::vector<Tensor<double>*> leaves{&x, &p.c_o};
      for (auto& h : p.heads) {
        for (auto* t : {&h.w_q, &h.w_k, &h.w_v, &h.w_o, &h.c_v}) leaves.push_back(t);
      }
      for (auto& t : c.per_head) leaves.push_back(&t.values());
      if (kind == PEKind::kRpeToeplitz) {
        for (auto& b : bias) leaves.push_back(&b.values());
      } else {
        for (auto& s : shaw) leaves.push_back(&s.rel_vectors);
      }
      testing::LossFn fn = [&](G& g, std::vector<Var<double>>& v) {
            auto y = attn_layer(g, v[0], p, pe);
            return g.sum(g.mul(y, y));
          };
      const double err = testing::gradcheck(fn, leaves);
      CHECK(err < 1e-4);
    }
  }
}
