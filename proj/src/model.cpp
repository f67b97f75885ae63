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
#include "urpe/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "urpe/errors.hpp"

namespace urpe {

// ---- configuration -------------------------------------------------------

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw InputError(std::string("model.") + name + " must be positive");
  };
  positive(layers, "layers");
  positive(heads, "heads");
  positive(d_model, "d_model");
  positive(d_head, "d_head");
  positive(d_ff, "d_ff");
  positive(vocab_in, "vocab_in");
  positive(vocab_out, "vocab_out");
  positive(n_max, "n_max");
}

std::string ModelConfig::variant() const {
  std::string base;
  switch (pe_kind) {
    case PEKind::kNone: base = "nope"; break;
    case PEKind::kApe: base = "ape"; break;
    case PEKind::kRpeToeplitz: base = "rpe"; break;
    case PEKind::kRpeShaw: base = "shaw"; break;
  }
  return urpe ? base + "+urpe" : base;
}

PEKind parse_pe_kind(const std::string& text) {
  if (text == "none") return PEKind::kNone;
  if (text == "ape") return PEKind::kApe;
  if (text == "rpe_toeplitz") return PEKind::kRpeToeplitz;
  if (text == "rpe_shaw") return PEKind::kRpeShaw;
  throw InputError("unknown pe kind '" + text +
                   "' (expected none|ape|rpe_toeplitz|rpe_shaw)");
}

namespace {

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') {
    throw InputError("model." + key + ": expected a non-negative integer, got '" + v + "'");
  }
  return static_cast<std::size_t>(out);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InputError("model." + key + ": expected true|false, got '" + v + "'");
}

}  // namespace

std::vector<std::pair<std::string, std::string>> config_fields(const ModelConfig& c) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"layers", std::to_string(c.layers)},
      {"heads", std::to_string(c.heads)},
      {"d_model", std::to_string(c.d_model)},
      {"d_head", std::to_string(c.d_head)},
      {"d_ff", std::to_string(c.d_ff)},
      {"pe", pe_kind_name(c.pe_kind)},
      {"urpe", b(c.urpe)},
      {"causal", b(c.causal)},
      {"use_norm", b(c.use_norm)},
      {"vocab_in", std::to_string(c.vocab_in)},
      {"vocab_out", std::to_string(c.vocab_out)},
      {"n_max", std::to_string(c.n_max)},
      {"scale_qk", b(c.scale_qk)},
  };
}

void set_config_field(ModelConfig& c, const std::string& key, const std::string& value) {
  if (key == "layers") c.layers = parse_size(key, value);
  else if (key == "heads") c.heads = parse_size(key, value);
  else if (key == "d_model") c.d_model = parse_size(key, value);
  else if (key == "d_head") c.d_head = parse_size(key, value);
  else if (key == "d_ff") c.d_ff = parse_size(key, value);
  else if (key == "pe") c.pe_kind = parse_pe_kind(value);
  else if (key == "urpe") c.urpe = parse_bool(key, value);
  else if (key == "causal") c.causal = parse_bool(key, value);
  else if (key == "use_norm") c.use_norm = parse_bool(key, value);
  else if (key == "vocab_in") c.vocab_in = parse_size(key, value);
  else if (key == "vocab_out") c.vocab_out = parse_size(key, value);
  else if (key == "n_max") c.n_max = parse_size(key, value);
  else if (key == "scale_qk") c.scale_qk = parse_bool(key, value);
  else throw InputError("unknown model key '" + key + "'");
}

// ---- blocks --------------------------------------------------------------

template <class T>
FFNParams<T>::FFNParams(std::size_t d, std::size_t r) : w1({d, r}), w2({r, d}) {
  w1.set_requires_grad(true);
  w2.set_requires_grad(true);
}

template <class T>
Var<T> ffn_mix(Graph<T>& g, const Var<T>& x, FFNParams<T>& p) {
  return g.matmul(g.relu(g.matmul(x, g.param(p.w1))), g.param(p.w2));
}

template <class T>
Var<T> ffn(Graph<T>& g, const Var<T>& x, FFNParams<T>& p) {
  return g.add(x, ffn_mix(g, x, p));
}

template <class T>
LayerParams<T>::LayerParams(const ModelConfig& c)
    : attn(c.heads, c.d_model, c.d_head),
      ffn(c.d_model, c.d_ff),
      attn_norm({c.d_model}, T{1}),
      ffn_norm({c.d_model}, T{1}) {
  attn.scale_qk = c.scale_qk;
  attn_norm.set_requires_grad(c.use_norm);
  ffn_norm.set_requires_grad(c.use_norm);
  if (c.pe_kind == PEKind::kRpeToeplitz) {
    rel_bias.reserve(c.heads);
    for (std::size_t h = 0; h < c.heads; ++h) rel_bias.emplace_back(c.n_max, T{0});
  } else if (c.pe_kind == PEKind::kRpeShaw) {
    shaw.reserve(c.heads);
    for (std::size_t h = 0; h < c.heads; ++h) shaw.emplace_back(c.n_max, c.d_head);
  }
}

// ---- model ---------------------------------------------------------------

template <class T>
Model<T>::Model(const ModelConfig& config)
    : final_norm({config.d_model}, T{1}), config_(config) {
  config_.validate();
  embedding = Tensor<T>({config_.vocab_in, config_.d_model});
  embedding.set_requires_grad(true);
  if (config_.pe_kind == PEKind::kApe) {
    ape.emplace(config_.n_max, config_.d_model);
    ape->embeddings.set_requires_grad(true);
  }
  layers.reserve(config_.layers);
  for (std::size_t l = 0; l < config_.layers; ++l) layers.emplace_back(config_);
  if (config_.urpe) urpe.emplace(config_.heads, config_.n_max, config_.causal);
  final_norm.set_requires_grad(config_.use_norm);
  head = Tensor<T>({config_.d_model, config_.vocab_out});
  head.set_requires_grad(true);
}

template <class T>
Model<T> Model<T>::create(const ModelConfig& config, std::uint64_t seed) {
  Model<T> m(config);
  std::mt19937_64 rng(seed);
  auto normal = [&](Tensor<T>& t, double std) {
    std::normal_distribution<double> dist(0.0, std);
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  };
  auto uniform = [&](Tensor<T>& t) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(t.shape()[0]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  };
  normal(m.embedding, 0.02);
  if (m.ape) normal(m.ape->embeddings, 0.02);
  for (auto& layer : m.layers) {
    for (auto& h : layer.attn.heads) {
      uniform(h.w_q);
      uniform(h.w_k);
      uniform(h.w_v);
      uniform(h.w_o);
    }
    uniform(layer.ffn.w1);
    uniform(layer.ffn.w2);
  }
  uniform(m.head);
  return m;
}

template <class T>
std::vector<NamedParam<T>> Model<T>::parameters() {
  std::vector<NamedParam<T>> out;
  // Membership follows the configuration, not requires_grad, so a tensor
  // that was reassigned wholesale is still listed.
  auto push = [&](std::string name, Tensor<T>& t, ParamGroup group, bool on = true) {
    if (on) out.push_back({std::move(name), &t, group});
  };
  push("embedding", embedding, ParamGroup::kEmbedding);
  if (ape) push("ape", ape->embeddings, ParamGroup::kEmbedding);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& layer = layers[l];
    const std::string lp = "layer" + std::to_string(l) + ".";
    for (std::size_t h = 0; h < layer.attn.heads.size(); ++h) {
      auto& hp = layer.attn.heads[h];
      const std::string hpfx = lp + "head" + std::to_string(h) + ".";
      push(hpfx + "w_q", hp.w_q, ParamGroup::kProjection);
      push(hpfx + "w_k", hp.w_k, ParamGroup::kProjection);
      push(hpfx + "w_v", hp.w_v, ParamGroup::kProjection);
      push(hpfx + "w_o", hp.w_o, ParamGroup::kProjection);
      push(hpfx + "c_k", hp.c_k, ParamGroup::kProjection, layer.attn.key_bias());
      push(hpfx + "c_v", hp.c_v, ParamGroup::kProjection, layer.attn.value_bias());
      if (h < layer.rel_bias.size()) {
        push(hpfx + "rel_bias", layer.rel_bias[h].values(), ParamGroup::kPositional);
      }
      if (h < layer.shaw.size()) {
        push(hpfx + "rel_vectors", layer.shaw[h].rel_vectors, ParamGroup::kPositional);
      }
    }
    push(lp + "attn.c_o", layer.attn.c_o, ParamGroup::kProjection, layer.attn.output_bias());
    push(lp + "ffn.w1", layer.ffn.w1, ParamGroup::kProjection);
    push(lp + "ffn.w2", layer.ffn.w2, ParamGroup::kProjection);
    push(lp + "attn_norm", layer.attn_norm, ParamGroup::kNorm, config_.use_norm);
    push(lp + "ffn_norm", layer.ffn_norm, ParamGroup::kNorm, config_.use_norm);
  }
  if (urpe) {
    for (std::size_t h = 0; h < urpe->per_head.size(); ++h) {
      push("urpe.c" + std::to_string(h), urpe->per_head[h].values(), ParamGroup::kPositional);
    }
  }
  push("final_norm", final_norm, ParamGroup::kNorm, config_.use_norm);
  push("head", head, ParamGroup::kProjection);
  return out;
}

template <class T>
std::size_t Model<T>::parameter_count() {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor->size();
  return total;
}

template <class T>
PEDescriptor<T> Model<T>::descriptor(std::size_t layer) {
  PEDescriptor<T> pe;
  pe.kind = config_.pe_kind;
  pe.toeplitz = layers[layer].rel_bias;
  pe.shaw = layers[layer].shaw;
  pe.urpe = urpe ? &*urpe : nullptr;
  return pe;
}

template <class T>
Var<T> Model<T>::embed(Graph<T>& g, std::span<const int> tokens) {
  if (tokens.size() > config_.n_max) {
    throw CapacityError("model_forward: sequence length " +
                        std::to_string(tokens.size()) + " exceeds n_max " +
                        std::to_string(config_.n_max));
  }
  auto x = g.embedding(g.param(embedding), tokens);
  if (ape) {
    std::vector<int> positions(tokens.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);
    x = g.add(x, g.embedding(g.param(ape->embeddings), positions));
  }
  return x;
}

template <class T>
Var<T> Model<T>::block_forward(Graph<T>& g, const Var<T>& x, std::size_t layer) {
  if (layer >= layers.size()) {
    throw ContractError("block_forward: layer " + std::to_string(layer) +
                        " out of range");
  }
  auto& lp = layers[layer];
  const auto pe = descriptor(layer);
  Var<T> h = x;
  if (config_.use_norm) {
    h = g.add(x, attn_mix(g, g.rms_norm(x, g.param(lp.attn_norm)), lp.attn, pe));
    return g.add(h, ffn_mix(g, g.rms_norm(h, g.param(lp.ffn_norm)), lp.ffn));
  }
  return ffn(g, attn_layer(g, h, lp.attn, pe), lp.ffn);
}

template <class T>
Var<T> Model<T>::project(Graph<T>& g, const Var<T>& x) {
  Var<T> h = config_.use_norm ? g.rms_norm(x, g.param(final_norm)) : x;
  return g.matmul(h, g.param(head));
}

template <class T>
Var<T> Model<T>::forward(Graph<T>& g, std::span<const int> tokens) {
  auto x = embed(g, tokens);
  for (std::size_t l = 0; l < layers.size(); ++l) x = block_forward(g, x, l);
  return project(g, x);
}

template <class T>
Tensor<T> Model<T>::logits(std::span<const int> tokens) {
  Graph<T> g(Graph<T>::Mode::kInference);
  return forward(g, tokens)->val();
}

// ---- checkpoints ---------------------------------------------------------

namespace {

constexpr const char* kMagic = "URPE-CHECKPOINT v1";

template <class U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    for (std::size_t i = 0; i < sizeof(U) / 2; ++i) std::swap(b[i], b[sizeof(U) - 1 - i]);
    std::memcpy(&v, b, sizeof(U));
    return v;
  }
}

template <class U>
void write_le(std::ostream& out, U v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <class U>
U read_le(std::istream& in) {
  U v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!in) throw InputError("checkpoint truncated");
  return to_little(v);
}

struct Manifest {
  ModelConfig config;
  std::vector<std::pair<std::string, Shape>> params;
};

Shape parse_shape(const std::string& text) {
  Shape s;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      s.push_back(static_cast<std::size_t>(std::stoull(part)));
    } catch (const std::exception&) {
      throw InputError("checkpoint: bad shape '" + text + "'");
    }
  }
  if (s.empty()) throw InputError("checkpoint: empty shape");
  return s;
}

std::string shape_token(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

Manifest read_manifest(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw InputError("checkpoint: bad magic");
  }
  Manifest m;
  bool done = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      done = true;
      break;
    }
    std::stringstream ss(line);
    std::string kind;
    ss >> kind;
    if (kind == "config") {
      std::string kv;
      while (ss >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw InputError("checkpoint: bad config entry '" + kv + "'");
        set_config_field(m.config, kv.substr(0, eq), kv.substr(eq + 1));
      }
    } else if (kind == "param") {
      std::string name, shape;
      if (!(ss >> name >> shape)) throw InputError("checkpoint: bad param line '" + line + "'");
      m.params.emplace_back(name, parse_shape(shape));
    } else {
      throw InputError("checkpoint: unexpected header line '" + line + "'");
    }
  }
  if (!done) throw InputError("checkpoint: header not terminated");
  m.config.validate();
  return m;
}

}  // namespace

template <class T>
void save_checkpoint(Model<T>& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out << kMagic << '\n' << "config";
  for (const auto& [k, v] : config_fields(model.config())) out << ' ' << k << '=' << v;
  out << '\n';
  auto params = model.parameters();
  for (const auto& p : params) {
    out << "param " << p.name << ' ' << shape_token(p.tensor->shape()) << '\n';
  }
  out << "end\n";
  for (const auto& p : params) {
    write_le<std::uint64_t>(out, p.tensor->size());
    for (T v : p.tensor->data()) write_le<double>(out, static_cast<double>(v));
  }
  if (!out) throw InputError("failed writing " + path.string());
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  return read_manifest(in).config;
}

template <class T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  const Manifest manifest = read_manifest(in);
  Model<T> model(manifest.config);
  auto params = model.parameters();
  if (params.size() != manifest.params.size()) {
    throw InputError("checkpoint: manifest lists " + std::to_string(manifest.params.size()) +
                     " parameters, config implies " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, shape] = manifest.params[i];
    if (name != params[i].name || shape != params[i].tensor->shape()) {
      throw InputError("checkpoint: parameter '" + name + "' does not match model layout");
    }
    const auto count = read_le<std::uint64_t>(in);
    if (count != params[i].tensor->size()) {
      throw InputError("checkpoint: length prefix mismatch for '" + name + "'");
    }
    for (auto& v : params[i].tensor->data()) {
      const double d = read_le<double>(in);
      if (!std::isfinite(d)) throw InputError("checkpoint: non-finite value in '" + name + "'");
      v = static_cast<T>(d);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw InputError("checkpoint: trailing bytes");
  }
  return model;
}

#define URPE_INSTANTIATE(T)                                                       \
  template struct FFNParams<T>;                                                  \
  template struct LayerParams<T>;                                                \
  template class Model<T>;                                                       \
  template Var<T> ffn_mix(Graph<T>&, const Var<T>&, FFNParams<T>&);              \
  template Var<T> ffn(Graph<T>&, const Var<T>&, FFNParams<T>&);                  \
  template void save_checkpoint(Model<T>&, const std::filesystem::path&);        \
  template Model<T> load_checkpoint<T>(const std::filesystem::path&);

URPE_INSTANTIATE(float)
URPE_INSTANTIATE(double)
#undef URPE_INSTANTIATE

}  // namespace urpe
