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
#include <cmath>
#include <random>
#include <string>

#include "doctest.h"
#include "test_support.hpp"
#include "urpe/errors.hpp"
#include "urpe/probes.hpp"

using namespace urpe;
using urpe::testing::random_tensor;

namespace {

ModelConfig collapse_config(PEKind kind, std::size_t layers, std::size_t d) {
  ModelConfig c;
  c.pe_kind = kind;
  c.layers = layers;
  c.d_model = d;
  c.heads = 2;
  c.d_head = d / 2;
  c.d_ff = 2 * d;
  c.n_max = 12;
  return c;
}

// Ternary search: an independent one-dimensional minimizer.
double minimize_over_c(double m, long n) {
  double lo = -10 * m, hi = 10 * m;
  for (int it = 0; it < 300; ++it) {
    const double a = lo + (hi - lo) / 3, b = hi - (hi - lo) / 3;
    if (lower_bound(m, n, a) < lower_bound(m, n, b)) hi = b;
    else lo = a;
  }
  return lower_bound(m, n, 0.5 * (lo + hi));
}

}  // namespace

TEST_CASE("collapse holds for RPE and vanilla models") {
  for (auto kind : {PEKind::kNone, PEKind::kRpeToeplitz, PEKind::kRpeShaw}) {
    auto m = Model<float>::create(collapse_config(kind, 2, 8), 4);
    for (int token : {0, 3, 9}) CHECK(collapse_probe(m, token, 12).passed);
  }
}

TEST_CASE("collapse survives random training") {
  auto m = Model<float>::create(collapse_config(PEKind::kRpeShaw, 2, 8), 5);
  random_training(m, 150, 12, 7);
  const auto r = collapse_probe(m, 2, 12);
  CHECK(r.passed);
  // training did move the positional vectors away from their init
  double mass = 0;
  for (float v : m.layers[0].shaw[0].rel_vectors.data()) mass += std::abs(v);
  CHECK(mass > 0.0);
}

TEST_CASE("collapse rejects models outside the claim") {
  auto cfg = collapse_config(PEKind::kRpeToeplitz, 1, 8);
  cfg.urpe = true;
  auto u = Model<float>::create(cfg, 1);
  CHECK_THROWS_AS(collapse_probe(u, 0, 4), ContractError);
  auto a = Model<float>::create(collapse_config(PEKind::kApe, 1, 8), 1);
  CHECK_THROWS_AS(collapse_probe(a, 0, 4), ContractError);
}

TEST_CASE("lower bound cases") {
  CHECK(lower_bound(1, 4, 0) == 4.0);
  CHECK(lower_bound_floor(1, 4) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(lower_bound(1, 4, 0.5) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(std::abs(minimize_over_c(1, 4) - 3.0) < 1e-12);
  CHECK_THROWS_AS(lower_bound(1, 2, 0), DomainError);
  CHECK_THROWS_AS(lower_bound_floor(1, 1), DomainError);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> m_dist(0.1, 4);
  for (int t = 0; t < 100; ++t) {
    const double m = m_dist(rng);
    const long n = 3 + static_cast<long>(rng() % 200);
    CHECK(std::abs(minimize_over_c(m, n) - lower_bound_floor(m, n)) < 1e-12 * std::max(1.0, m * m));
  }
  const auto r = lower_bound_probe(100, 11);
  CHECK(r.passed);
  CHECK(r.residual("min_margin") >= -1e-12);
}

TEST_CASE("attentive condition") {
  std::mt19937_64 rng(3);
  {
    // u = 0: both sides uniform
    const auto x = random_tensor<double>({5, 3}, rng);
    const auto r = attentive_condition_probe(Tensor<double>({3}), 0.7, x);
    CHECK(r.passed);
    CHECK(r.residual("max_abs_diff") < 1e-15);
  }
  for (int t = 0; t < 100; ++t) {
    const double c = t < 10 ? 0.0 : std::uniform_real_distribution<double>(-2, 2)(rng);
    const auto u = random_tensor<double>({4}, rng);
    const auto x = random_tensor<double>({6, 4}, rng);
    CHECK(attentive_condition_probe(u, c, x).passed);
  }
  CHECK_THROWS_AS(attentive_condition_probe(Tensor<double>({2}), 0, Tensor<double>({3, 3})),
                  DimensionError);
}

TEST_CASE("position-aware condition") {
  std::mt19937_64 rng(4);
  for (std::size_t n : {2u, 4u, 8u}) {
    // independent oracle: sum the rows of the constructed attention
    ModelConfig c;
    c.layers = 1;
    c.heads = 1;
    c.d_model = 3;
    c.d_head = 1;
    c.n_max = n;
    c.urpe = true;
    c.causal = true;
    Model<double> m(c);
    for (int t = 0; t < 50; ++t) {
      const auto x = random_tensor<double>({n, 3}, rng, -5, 5);
      Graph<double> g;
      const auto a = attn_matrix(g, g.constant(x), m.layers[0].attn, m.descriptor(0), 0)->val();
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < n; ++j) s += a.at(i, j);
        CHECK(std::abs(s - double(n - i) / double(n)) < 1e-12);
      }
      CHECK(position_aware_probe(n, x).passed);
    }
  }
  CHECK_THROWS_AS(position_aware_probe(1, Tensor<double>({1, 2})), DomainError);
}

TEST_CASE("position injection") {
  {
    const auto r = position_injection_probe(4, 3, Tensor<double>({4, 3}));
    CHECK(r.passed);
    CHECK(r.residual("max_abs_diff") == 0.0);
    CHECK(r.residual("min_gap") == doctest::Approx(2.0));
  }
  std::mt19937_64 rng(5);
  for (std::size_t n : {2u, 4u, 8u}) {
    for (std::size_t d : {1u, 3u}) {
      const auto r = position_injection_probe(n, d, random_tensor<double>({n, d}, rng));
      CHECK(r.passed);
      CHECK(r.residual("column_spread") < 1e-10);
      CHECK(r.residual("min_gap") > 1.0);
    }
  }
}

TEST_CASE("separation") {
  const auto r = separation_probe(4, 10);
  CHECK(r.passed);
  // logits proportional to (1, 3/4, 1/2, 1/4): neighbouring gap 1/4
  CHECK(r.residual("min_gap") == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(r.residual("rpe_twin_spread") < 1e-5);
  const auto two = separation_probe(2, 3);
  CHECK(two.passed);
  CHECK(two.residual("min_gap") == doctest::Approx(0.5));
}

TEST_CASE("report lines and suites") {
  const auto r = separation_probe(4, 10);
  const auto line = r.to_line();
  CHECK(line.rfind("probe=separation pass=true ", 0) == 0);
  CHECK(line.find("min_gap=0.25") != std::string::npos);
  for (const auto& name : probe_names()) {
    INFO(name);
    const auto s = run_probe(name, 1);
    CHECK(s.passed);
    CHECK(s.name == name);
  }
  CHECK_THROWS_AS(run_probe("nonsense", 1), InputError);
  // deterministic given the seed
  CHECK(run_probe("attentive", 9).to_line() == run_probe("attentive", 9).to_line());
}
