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
#include "urpe/probes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "urpe/errors.hpp"
#include "urpe/training.hpp"

namespace urpe {

double ProbeReport::residual(const std::string& key) const {
  for (const auto& [k, v] : residuals) {
    if (k == key) return v;
  }
  throw ContractError("probe " + name + " has no residual '" + key + "'");
}

std::string ProbeReport::to_line() const {
  std::ostringstream out;
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::string(buf);
  };
  out << "probe=" << name << " pass=" << (passed ? "true" : "false")
      << " tol=" << num(tolerance);
  for (const auto& [k, v] : residuals) out << ' ' << k << '=' << num(v);
  out << " construction=\"" << construction << '"';
  return out.str();
}

// ---- RPE collapse ---------------------------------------------------------

template <class T>
ProbeReport collapse_probe(Model<T>& model, int token, std::size_t n) {
  const auto& c = model.config();
  if (c.urpe) throw ContractError("collapse_probe: model uses URPE, the claim does not apply");
  if (c.pe_kind == PEKind::kApe) {
    throw ContractError("collapse_probe: absolute positions break the constant-input argument");
  }
  const std::vector<int> tokens(n, token);
  const auto logits = model.logits(tokens);
  // Largest pairwise row difference equals the largest per-column spread.
  double worst = 0;
  for (std::size_t j = 0; j < logits.cols(); ++j) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min(lo, static_cast<double>(logits.at(i, j)));
      hi = std::max(hi, static_cast<double>(logits.at(i, j)));
    }
    worst = std::max(worst, hi - lo);
  }
  ProbeReport r;
  r.name = "collapse";
  r.tolerance = 1e-5;
  r.residuals = {{"max_row_diff", worst}};
  r.passed = worst < r.tolerance;
  r.construction = std::string("pe=") + pe_kind_name(c.pe_kind) + " L=" + std::to_string(c.layers) +
                   " d=" + std::to_string(c.d_model) + " token=" + std::to_string(token) +
                   " n=" + std::to_string(n);
  return r;
}

// ---- Frobenius lower bound -----------------------------------------------

double lower_bound(double m, long n, double c) {
  if (n <= 2) throw DomainError("lower_bound: the bound needs n > 2, got " + std::to_string(n));
  const double a = 2 * m - c;
  return a * a + static_cast<double>(n - 1) * c * c;
}

double lower_bound_floor(double m, long n) {
  if (n <= 2) throw DomainError("lower_bound: the bound needs n > 2, got " + std::to_string(n));
  return 4 * m * m / (1.0 + 1.0 / static_cast<double>(n - 1));
}

ProbeReport lower_bound_probe(std::size_t trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> m_dist(0.01, 5.0);
  std::uniform_int_distribution<long> n_dist(3, 512);
  double worst_margin = std::numeric_limits<double>::infinity();
  double worst_equality = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const double m = m_dist(rng);
    const long n = n_dist(rng);
    const double floor = lower_bound_floor(m, n);
    // Dense grid over [-2M, 4M], which brackets the minimizer 2M/n.
    const int points = 20001;
    double grid_min = std::numeric_limits<double>::infinity();
    for (int k = 0; k < points; ++k) {
      const double c = -2 * m + 6 * m * k / (points - 1);
      grid_min = std::min(grid_min, lower_bound(m, n, c));
    }
    worst_margin = std::min(worst_margin, grid_min - floor);
    const double at_min = lower_bound(m, n, 2 * m / static_cast<double>(n));
    worst_equality = std::max(worst_equality, std::abs(at_min - floor));
  }
  ProbeReport r;
  r.name = "lower_bound";
  r.tolerance = 1e-12;
  r.residuals = {{"min_margin", worst_margin}, {"equality_residual", worst_equality},
                 {"trials", static_cast<double>(trials)}};
  r.passed = worst_margin >= -r.tolerance && worst_equality <= r.tolerance;
  r.construction = "grid of 20001 c values on [-2M,4M], M in [0.01,5], n in [3,512]";
  return r;
}

// ---- URPE constructions ---------------------------------------------------

namespace {

// One-layer stack with B forced to zero, the requested multiplier, and
// every projection zero. Theory probes run unscaled and unnormalized.
ModelConfig construction_config(std::size_t n, std::size_t d, std::size_t heads,
                                std::size_t d_head, bool causal) {
  ModelConfig c;
  c.layers = 1;
  c.heads = heads;
  c.d_model = d;
  c.d_head = d_head;
  c.d_ff = 1;
  c.pe_kind = PEKind::kRpeToeplitz;
  c.urpe = true;
  c.causal = causal;
  c.use_norm = false;
  c.scale_qk = false;
  c.vocab_in = 1;
  c.vocab_out = 1;
  c.n_max = n;
  return c;
}

}  // namespace

ProbeReport attentive_condition_probe(const Tensor<double>& u, double c,
                                      const Tensor<double>& x) {
  const std::size_t n = x.rows(), d = x.cols();
  if (u.size() != d) {
    throw DimensionError("attentive_condition_probe: u has " + std::to_string(u.size()) +
                         " entries for width " + std::to_string(d));
  }
  Model<double> model(construction_config(n, d, 1, 1, false));
  auto& attn = model.layers[0].attn;
  for (std::size_t k = 0; k < d; ++k) {
    attn.heads[0].w_q[k] = u[k];
    attn.heads[0].w_k[k] = u[k];
  }
  attn.set_key_bias(true);
  attn.heads[0].c_k[0] = -c;  // keys become Xu - c 1

  Graph<double> g(Graph<double>::Mode::kInference);
  const auto a = attn_matrix(g, g.constant(x), attn, model.descriptor(0), 0)->val();

  std::vector<double> xu(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) xu[i] += x.at(i, k) * u[k];
  double worst = 0;
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) top = std::max(top, row[j] = xu[i] * (xu[j] - c));
    double total = 0;
    for (auto& v : row) total += (v = std::exp(v - top));
    for (std::size_t j = 0; j < n; ++j) worst = std::max(worst, std::abs(row[j] / total - a.at(i, j)));
  }
  ProbeReport r;
  r.name = "attentive";
  r.tolerance = 1e-12;
  r.residuals = {{"max_abs_diff", worst}};
  r.passed = worst < r.tolerance;
  r.construction = "W_Q=W_K=u (d x 1), c_K=-c, C=ones, B=0, scale_qk=off";
  return r;
}

ProbeReport position_aware_probe(std::size_t n, const Tensor<double>& x) {
  if (n < 2) throw DomainError("position_aware_probe: needs n >= 2");
  if (x.rows() != n) throw DimensionError("position_aware_probe: X must have n rows");
  Model<double> model(construction_config(n, x.cols(), 1, 1, true));
  Graph<double> g(Graph<double>::Mode::kInference);
  const auto a = attn_matrix(g, g.constant(x), model.layers[0].attn, model.descriptor(0), 0)->val();

  double worst = 0;
  std::vector<double> sums(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) sums[i] += a.at(i, j);
    const double expect = static_cast<double>(n - i) / static_cast<double>(n);
    worst = std::max(worst, std::abs(sums[i] - expect));
  }
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) min_gap = std::min(min_gap, std::abs(sums[i] - sums[j]));

  ProbeReport r;
  r.name = "position_aware";
  r.tolerance = 1e-12;
  r.residuals = {{"row_sum_residual", worst}, {"min_gap", min_gap}};
  r.passed = worst < r.tolerance && min_gap > 0;
  r.construction = "W_Q=W_K=0, c_K=0, B=0, C=upper-triangular ones";
  return r;
}

ProbeReport position_injection_probe(std::size_t n, std::size_t d,
                                     const Tensor<double>& x) {
  if (n < 2) throw DomainError("position_injection_probe: needs n >= 2");
  if (x.rows() != n || x.cols() != d) {
    throw DimensionError("position_injection_probe: X must be n x d");
  }
  const std::size_t heads = 2;
  Model<double> model(construction_config(n, d, heads, 1, true));
  auto& attn = model.layers[0].attn;
  // v = (1, (n-1)/n, ..., 1/n) has minimum gap 1/n.
  const double c_v = static_cast<double>(n);
  attn.set_value_bias(true);
  for (auto& h : attn.heads) {
    h.c_v[0] = c_v;
    h.w_o.fill(1.0);
  }
  Graph<double> g(Graph<double>::Mode::kInference);
  const auto y = model.block_forward(g, g.constant(x), 0)->val();

  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = static_cast<double>(heads) * c_v * static_cast<double>(n - i) / static_cast<double>(n);
  }
  double worst = 0, column_spread = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      worst = std::max(worst, std::abs(y.at(i, k) - (x.at(i, k) + u[i])));
      column_spread = std::max(column_spread,
                               std::abs((y.at(i, k) - x.at(i, k)) - (y.at(i, 0) - x.at(i, 0))));
    }
  }
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      min_gap = std::min(min_gap, std::abs((y.at(i, 0) - x.at(i, 0)) - (y.at(j, 0) - x.at(j, 0))));
    }
  }
  ProbeReport r;
  r.name = "position_injection";
  r.tolerance = 1e-10;
  r.residuals = {{"max_abs_diff", worst}, {"column_spread", column_spread}, {"min_gap", min_gap}};
  r.passed = worst < r.tolerance && column_spread < r.tolerance && min_gap > 1.0;
  r.construction = "H=2, d_H=1, W_Q=W_K=W_V=0, c_V=n, W_O=ones, causal C=ones, FFN=0";
  return r;
}

ProbeReport separation_probe(std::size_t n, std::size_t vocab) {
  if (n < 2) throw DomainError("separation_probe: needs n >= 2");
  if (vocab < 1) throw InputError("separation_probe: vocabulary must be non-empty");
  // Channel 0 carries a constant 1 from every embedding; the head routes it
  // through the attention into channel 1, which the output head reads.
  auto build = [&](bool with_urpe) {
    ModelConfig c = construction_config(n, 2, 1, 1, true);
    c.urpe = with_urpe;
    c.vocab_in = vocab;
    c.vocab_out = 2;
    Model<double> m(c);
    for (std::size_t t = 0; t < vocab; ++t) m.embedding.at(t, 0) = 1.0;
    m.layers[0].attn.heads[0].w_v.at(0, 0) = 1.0;
    m.layers[0].attn.heads[0].w_o.at(0, 1) = 1.0;
    m.head.at(1, 1) = 1.0;
    return m;
  };
  auto gap = [&](Model<double>& m) {
    const std::vector<int> tokens(n, 0);
    const auto logits = m.logits(tokens);
    double smallest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        double row = 0;
        for (std::size_t k = 0; k < logits.cols(); ++k) {
          row = std::max(row, std::abs(logits.at(i, k) - logits.at(j, k)));
        }
        smallest = std::min(smallest, row);
      }
    }
    return smallest;
  };
  auto urpe_model = build(true);
  auto rpe_model = build(false);
  const double g_urpe = gap(urpe_model);
  // Largest spread of the twin: the RPE side collapses to one row.
  double twin = 0;
  {
    const std::vector<int> tokens(n, 0);
    const auto logits = rpe_model.logits(tokens);
    for (std::size_t i = 1; i < n; ++i)
      for (std::size_t k = 0; k < logits.cols(); ++k)
        twin = std::max(twin, std::abs(logits.at(i, k) - logits.at(0, k)));
  }
  ProbeReport r;
  r.name = "separation";
  r.tolerance = 0.01;
  r.residuals = {{"min_gap", g_urpe}, {"rpe_twin_spread", twin}};
  r.passed = g_urpe > r.tolerance;
  r.construction = "L=1, d=2, W_V reads constant channel, W_O writes channel 1, causal C=ones, head reads channel 1";
  return r;
}

// ---- random training -----------------------------------------------------

template <class T>
void random_training(Model<T>& model, std::size_t steps, std::size_t n,
                     std::uint64_t seed, double lr) {
  const auto& c = model.config();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> token(0, static_cast<int>(c.vocab_in) - 1);
  std::uniform_int_distribution<int> label(0, static_cast<int>(c.vocab_out) - 1);
  auto params = model.parameters();
  for (auto& p : params) p.tensor->set_requires_grad(true);
  TrainConfig cfg;
  AdamState<T> state;
  std::vector<int> tokens(n), targets(n);
  for (std::size_t s = 0; s < steps; ++s) {
    for (auto& t : tokens) t = token(rng);
    for (auto& t : targets) t = label(rng);
    for (auto& p : params) p.tensor->zero_grad();
    Graph<T> g;
    g.backward(g.cross_entropy(model.forward(g, tokens), targets));
    adam_step<T>(params, state, lr, cfg);
  }
}

// ---- suites --------------------------------------------------------------

const std::vector<std::string>& probe_names() {
  static const std::vector<std::string> names{"collapse",       "lower_bound",
                                              "attentive",      "position_aware",
                                              "position_injection", "separation"};
  return names;
}

namespace {

Tensor<double> uniform(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

// Worst value of each residual; pass only if every member passed.
ProbeReport fold(const std::string& name, const std::vector<ProbeReport>& parts,
                 const std::string& construction) {
  ProbeReport r;
  r.name = name;
  r.passed = !parts.empty();
  r.tolerance = parts.empty() ? 0.0 : parts.front().tolerance;
  for (const auto& p : parts) {
    r.passed = r.passed && p.passed;
    for (const auto& [k, v] : p.residuals) {
      auto it = std::find_if(r.residuals.begin(), r.residuals.end(),
                             [&](const auto& e) { return e.first == k; });
      // gaps are "larger is better"; everything else is an error size
      const bool gap = k.find("gap") != std::string::npos;
      if (it == r.residuals.end()) {
        r.residuals.emplace_back(k, v);
      } else {
        it->second = gap ? std::min(it->second, v) : std::max(it->second, v);
      }
    }
  }
  r.residuals.emplace_back("cases", static_cast<double>(parts.size()));
  r.construction = construction;
  return r;
}

}  // namespace

ProbeReport run_probe(const std::string& name, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ProbeReport> parts;
  if (name == "collapse") {
    for (auto kind : {PEKind::kNone, PEKind::kRpeToeplitz, PEKind::kRpeShaw}) {
      for (std::size_t layers : {1u, 2u, 4u}) {
        for (std::size_t d : {16u, 64u}) {
          ModelConfig c;
          c.pe_kind = kind;
          c.layers = layers;
          c.d_model = d;
          c.heads = 4;
          c.d_head = d / 4;
          c.d_ff = 2 * d;
          c.n_max = 32;
          auto m = Model<float>::create(c, rng());
          const int token = static_cast<int>(rng() % c.vocab_in);
          parts.push_back(collapse_probe(m, token, 32));
          // Collapse is structural: it must survive training that moves B,
          // Shaw vectors and every projection away from their init.
          random_training(m, 1000, 32, rng());
          parts.push_back(collapse_probe(m, token, 32));
        }
      }
    }
    return fold(name, parts,
                "{none, rpe_toeplitz, rpe_shaw} x L{1,2,4} x d{16,64}, n=32, 32-bit, "
                "fresh and after 1000 random training steps");
  }
  if (name == "lower_bound") return lower_bound_probe(100, seed);
  if (name == "attentive") {
    std::uniform_real_distribution<double> c_dist(-2, 2);
    for (int t = 0; t < 100; ++t) {
      const std::size_t n = 2 + rng() % 15, d = 1 + rng() % 8;
      parts.push_back(attentive_condition_probe(uniform({d}, rng), c_dist(rng), uniform({n, d}, rng)));
    }
    return fold(name, parts, "100 random (u, c, X), W_Q=W_K=u, c_K=-c, C=ones, B=0");
  }
  if (name == "position_aware") {
    for (std::size_t n : {2u, 4u, 8u, 32u}) {
      for (int t = 0; t < 50; ++t) parts.push_back(position_aware_probe(n, uniform({n, 4}, rng, -3, 3)));
    }
    return fold(name, parts, "50 random X at n in {2,4,8,32}, W_Q=W_K=0, B=0, C=upper-triangular ones");
  }
  if (name == "position_injection") {
    for (std::size_t n : {2u, 4u, 8u}) {
      for (std::size_t d : {1u, 3u}) parts.push_back(position_injection_probe(n, d, uniform({n, d}, rng)));
    }
    return fold(name, parts, "n in {2,4,8}, d in {1,3}, H=2, W_V=0, c_V=n, W_O=ones, causal C");
  }
  if (name == "separation") {
    for (std::size_t n : {2u, 4u, 8u, 64u}) parts.push_back(separation_probe(n, 10));
    return fold(name, parts, "hand-set one-layer URPE model at n in {2,4,8,64}");
  }
  std::string valid;
  for (const auto& p : probe_names()) valid += (valid.empty() ? "" : ", ") + p;
  throw InputError("unknown probe '" + name + "' (valid: " + valid + ")");
}

template ProbeReport collapse_probe(Model<float>&, int, std::size_t);
template ProbeReport collapse_probe(Model<double>&, int, std::size_t);
template void random_training(Model<float>&, std::size_t, std::size_t, std::uint64_t, double);
template void random_training(Model<double>&, std::size_t, std::size_t, std::uint64_t, double);

}  // namespace urpe
