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
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"
#include "test_support.hpp"
#include "urpe/errors.hpp"
#include "urpe/model.hpp"

using namespace urpe;
using urpe::testing::max_abs_diff;
using urpe::testing::random_tensor;
using G = Graph<double>;

namespace {

ModelConfig small_config(PEKind kind = PEKind::kRpeToeplitz, bool urpe = false) {
  ModelConfig c;
  c.layers = 2;
  c.heads = 2;
  c.d_model = 6;
  c.d_head = 3;
  c.d_ff = 8;
  c.pe_kind = kind;
  c.urpe = urpe;
  c.vocab_in = 5;
  c.vocab_out = 7;
  c.n_max = 8;
  return c;
}

std::vector<int> random_tokens(std::size_t n, int vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(0, vocab - 1);
  std::vector<int> t(n);
  for (auto& v : t) v = dist(rng);
  return t;
}

// Give positional carriers non-trivial values so tests do not pass merely
// because B = 0 and C = 1.
void perturb_positions(Model<double>& m, std::mt19937_64& rng) {
  for (auto& l : m.layers) {
    for (auto& b : l.rel_bias) b.values() = random_tensor<double>(b.values().shape(), rng);
    for (auto& s : l.shaw) s.rel_vectors = random_tensor<double>(s.rel_vectors.shape(), rng);
  }
  if (m.urpe) {
    for (auto& c : m.urpe->per_head) c.values() = random_tensor<double>(c.values().shape(), rng, 0.5, 1.5);
  }
}

}  // namespace

TEST_CASE("ffn cases") {
  std::mt19937_64 rng(1);
  FFNParams<double> p(4, 6);
  const auto x = random_tensor<double>({5, 4}, rng);
  {
    G g;
    CHECK(max_abs_diff(ffn(g, g.constant(x), p)->val(), x) == 0.0);
  }
  p.w1 = random_tensor<double>({4, 6}, rng);
  p.w2 = random_tensor<double>({6, 4}, rng);
  G g;
  const auto y = ffn(g, g.constant(x), p)->val();
  // per-row oracle
  double worst = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    std::vector<double> hidden(6);
    for (std::size_t k = 0; k < 6; ++k) {
      for (std::size_t t = 0; t < 4; ++t) hidden[k] += x.at(i, t) * p.w1.at(t, k);
      hidden[k] = std::max(hidden[k], 0.0);
    }
    for (std::size_t j = 0; j < 4; ++j) {
      double out = x.at(i, j);
      for (std::size_t k = 0; k < 6; ++k) out += hidden[k] * p.w2.at(k, j);
      worst = std::max(worst, std::abs(out - y.at(i, j)));
    }
  }
  CHECK(worst < 1e-12);

  Tensor<double> same({3, 4});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) same.at(i, j) = x.at(0, j);
  const auto ys = ffn(g, g.constant(same), p)->val();
  for (std::size_t i = 1; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(ys.at(i, j) == ys.at(0, j));

  CHECK_THROWS_AS(ffn(g, g.constant(Tensor<double>({2, 5})), p), DimensionError);
}

TEST_CASE("zero weights reduce blocks to identities") {
  std::mt19937_64 rng(2);
  Model<double> m(small_config(PEKind::kRpeToeplitz, true));
  const auto x = random_tensor<double>({5, 6}, rng);
  G g;
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(max_abs_diff(m.block_forward(g, g.constant(x), l)->val(), x) == 0.0);
  }
  CHECK_THROWS_AS(m.block_forward(g, g.constant(x), 2), ContractError);

  m.embedding = random_tensor<double>({5, 6}, rng);
  m.head = random_tensor<double>({6, 7}, rng);
  const std::vector<int> tokens{0, 3, 1, 4};
  const auto logits = m.logits(tokens);
  G h;
  const auto direct = h.matmul(h.embedding(h.constant(m.embedding), tokens), h.constant(m.head))->val();
  CHECK(max_abs_diff(logits, direct) == 0.0);
}

TEST_CASE("stacking equals manual composition") {
  std::mt19937_64 rng(3);
  auto m = Model<double>::create(small_config(), 7);
  perturb_positions(m, rng);
  const auto tokens = random_tokens(6, 5, rng);
  G g;
  auto x = m.embed(g, tokens);
  x = m.block_forward(g, x, 0);
  x = m.block_forward(g, x, 1);
  const auto manual = m.project(g, x)->val();
  const auto full = m.logits(tokens);
  CHECK(std::equal(manual.data().begin(), manual.data().end(), full.data().begin()));
  // determinism
  const auto again = m.logits(tokens);
  CHECK(std::equal(again.data().begin(), again.data().end(), full.data().begin()));
}

TEST_CASE("the shared C reaches every layer") {
  std::mt19937_64 rng(4);
  auto m = Model<double>::create(small_config(PEKind::kRpeToeplitz, true), 9);
  const auto x = random_tensor<double>({5, 6}, rng);
  std::vector<Tensor<double>> before;
  for (std::size_t l = 0; l < 2; ++l) {
    G g;
    before.push_back(attn_matrix(g, g.constant(x), m.layers[l].attn, m.descriptor(l), 1)->val());
  }
  m.urpe->per_head[1].set_offset(-1, 0.25);
  for (std::size_t l = 0; l < 2; ++l) {
    G g;
    const auto after = attn_matrix(g, g.constant(x), m.layers[l].attn, m.descriptor(l), 1)->val();
    CHECK(max_abs_diff(after, before[l]) > 0.0);
    CHECK(m.descriptor(l).urpe == &*m.urpe);
  }
}

TEST_CASE("models without positions are permutation equivariant") {
  std::mt19937_64 rng(5);
  auto m = Model<double>::create(small_config(PEKind::kNone), 11);
  const auto tokens = random_tokens(7, 5, rng);
  std::vector<std::size_t> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> permuted(7);
  for (std::size_t i = 0; i < 7; ++i) permuted[i] = tokens[perm[i]];
  const auto a = m.logits(tokens);
  const auto b = m.logits(permuted);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j) CHECK(b.at(i, j) == doctest::Approx(a.at(perm[i], j)).epsilon(1e-12));
}

TEST_CASE("constant tokens collapse in RPE models") {
  std::mt19937_64 rng(6);
  for (auto kind : {PEKind::kRpeToeplitz, PEKind::kRpeShaw}) {
    auto cfg = small_config(kind);
    auto m = Model<float>::create(cfg, 13);
    for (auto& l : m.layers) {
      for (auto& b : l.rel_bias) b.values() = random_tensor<float>(b.values().shape(), rng);
      for (auto& s : l.shaw) s.rel_vectors = random_tensor<float>(s.rel_vectors.shape(), rng);
    }
    const std::vector<int> tokens(8, 3);
    const auto logits = m.logits(tokens);
    float worst = 0;
    for (std::size_t i = 1; i < 8; ++i)
      for (std::size_t j = 0; j < 7; ++j) worst = std::max(worst, std::abs(logits.at(i, j) - logits.at(0, j)));
    CHECK(worst < 1e-5f);
  }
}

TEST_CASE("model input errors") {
  auto m = Model<double>::create(small_config(), 1);
  const std::vector<int> bad{0, 5};
  CHECK_THROWS_AS(m.logits(bad), InputError);
  const std::vector<int> negative{-1};
  CHECK_THROWS_AS(m.logits(negative), InputError);
  const std::vector<int> long_seq(9, 0);
  CHECK_THROWS_AS(m.logits(long_seq), CapacityError);
}

TEST_CASE("twins share every weight apart from positional carriers") {
  auto rpe = Model<double>::create(small_config(PEKind::kRpeToeplitz), 21);
  auto urpe = Model<double>::create(small_config(PEKind::kRpeToeplitz, true), 21);
  auto nope = Model<double>::create(small_config(PEKind::kNone), 21);
  CHECK(max_abs_diff(rpe.head, urpe.head) == 0.0);
  CHECK(max_abs_diff(rpe.head, nope.head) == 0.0);
  CHECK(max_abs_diff(rpe.layers[1].ffn.w2, nope.layers[1].ffn.w2) == 0.0);
  const std::vector<int> tokens{1, 2, 3, 4, 0};
  const auto a = rpe.logits(tokens);
  const auto b = urpe.logits(tokens);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  CHECK(urpe.parameter_count() - rpe.parameter_count() == urpe_param_count(2, 8));
}

TEST_CASE("every learnable tensor receives gradient") {
  std::mt19937_64 rng(7);
  for (auto kind : {PEKind::kApe, PEKind::kRpeToeplitz, PEKind::kRpeShaw}) {
    auto cfg = small_config(kind, kind != PEKind::kApe);
    cfg.use_norm = true;
    auto m = Model<double>::create(cfg, 3);
    const auto tokens = random_tokens(8, 5, rng);
    const auto targets = random_tokens(8, 7, rng);
    G g;
    g.backward(g.cross_entropy(m.forward(g, tokens), targets));
    for (auto& p : m.parameters()) {
      double mass = 0;
      for (double v : p.tensor->grad()) mass += std::abs(v);
      INFO(p.name);
      CHECK(mass > 0.0);
    }
  }
}

TEST_CASE("full model backward matches finite differences") {
  std::mt19937_64 rng(8);
  for (auto kind : {PEKind::kApe, PEKind::kRpeToeplitz, PEKind::kRpeShaw}) {
    for (bool norm : {false, true}) {
      auto cfg = small_config(kind, kind != PEKind::kApe);
      cfg.d_model = 4;
      cfg.d_head = 2;
      cfg.d_ff = 5;
      cfg.n_max = 5;
      cfg.use_norm = norm;
      cfg.scale_qk = norm;
      auto m = Model<double>::create(cfg, 5);
      perturb_positions(m, rng);
      // Unit-scale embeddings keep the Q/K gradients well above the
      // finite-difference noise floor.
      m.embedding = random_tensor<double>(m.embedding.shape(), rng);
      if (m.ape) m.ape->embeddings = random_tensor<double>(m.ape->embeddings.shape(), rng);
      const auto tokens = random_tokens(5, 5, rng);
      const auto targets = random_tokens(5, 7, rng);
      std::vector<Tensor<double>*> leaves;
      for (auto& p : m.parameters()) leaves.push_back(p.tensor);
      testing::LossFn fn = [&](G& g, std::vector<Var<double>>&) {
            return g.cross_entropy(m.forward(g, tokens), targets);
          };
      const double err = testing::gradcheck(fn, leaves);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("config fields round trip") {
  ModelConfig c = small_config(PEKind::kRpeShaw, true);
  c.causal = true;
  c.scale_qk = true;
  ModelConfig d;
  for (const auto& [k, v] : config_fields(c)) set_config_field(d, k, v);
  CHECK(config_fields(d) == config_fields(c));
  CHECK(c.variant() == "shaw+urpe");
  CHECK_THROWS_AS(set_config_field(d, "depth", "3"), InputError);
  CHECK_THROWS_AS(set_config_field(d, "layers", "-1"), InputError);
  CHECK_THROWS_AS(set_config_field(d, "layers", "2x"), InputError);
  CHECK_THROWS_AS(set_config_field(d, "urpe", "maybe"), InputError);
  CHECK_THROWS_AS(set_config_field(d, "pe", "rotary"), InputError);
  d.heads = 0;
  CHECK_THROWS_AS(d.validate(), InputError);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "urpe_model_test";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(9);
  auto cfg = small_config(PEKind::kRpeToeplitz, true);
  cfg.causal = true;
  auto m = Model<float>::create(cfg, 17);
  for (auto& c : m.urpe->per_head) c.values() = random_tensor<float>(c.values().shape(), rng);
  save_checkpoint(m, dir / "m.ckpt");

  CHECK(config_fields(read_checkpoint_config(dir / "m.ckpt")) == config_fields(cfg));
  auto back = load_checkpoint<float>(dir / "m.ckpt");
  auto a = m.parameters();
  auto b = back.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(max_abs_diff(*a[i].tensor, *b[i].tensor) == 0.0f);
  }

  // truncation and garbage are rejected
  const auto size = std::filesystem::file_size(dir / "m.ckpt");
  std::filesystem::copy_file(dir / "m.ckpt", dir / "cut.ckpt");
  std::filesystem::resize_file(dir / "cut.ckpt", size - 5);
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "cut.ckpt"), InputError);
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint\n";
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "junk.ckpt"), InputError);
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "missing.ckpt"), InputError);
  std::filesystem::remove_all(dir);
}
