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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "urpe/attention.hpp"
#include "urpe/graph.hpp"
#include "urpe/positional.hpp"
#include "urpe/tensor.hpp"

namespace urpe {

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d_model = 64;
  std::size_t d_head = 16;
  std::size_t d_ff = 128;
  PEKind pe_kind = PEKind::kRpeToeplitz;
  bool urpe = false;
  bool causal = false;  // causal URPE multiplier
  bool use_norm = false;
  std::size_t vocab_in = 10;
  std::size_t vocab_out = 64;
  std::size_t n_max = 64;
  bool scale_qk = false;

  void validate() const;
  // "variant" label used in reports: nope | ape | rpe | shaw, suffixed +urpe.
  std::string variant() const;
};

std::vector<std::pair<std::string, std::string>> config_fields(const ModelConfig& c);
// Throws InputError for an unknown key or a malformed value.
void set_config_field(ModelConfig& c, const std::string& key, const std::string& value);
PEKind parse_pe_kind(const std::string& text);

template <class T>
struct FFNParams {
  FFNParams(std::size_t d, std::size_t r);

  Tensor<T> w1;  // d x r
  Tensor<T> w2;  // r x d
};

/// ReLU(X W1) W2, without the residual.
template <class T>
Var<T> ffn_mix(Graph<T>& g, const Var<T>& x, FFNParams<T>& p);

/// X + ReLU(X W1) W2, row-wise.
template <class T>
Var<T> ffn(Graph<T>& g, const Var<T>& x, FFNParams<T>& p);

template <class T>
struct LayerParams {
  LayerParams(const ModelConfig& c);

  AttentionParams<T> attn;
  FFNParams<T> ffn;
  Tensor<T> attn_norm;  // RMS gains, used when use_norm
  Tensor<T> ffn_norm;
  std::vector<ToeplitzParam<T>> rel_bias;  // per head, rpe_toeplitz
  std::vector<ShawRPEParam<T>> shaw;       // per head, rpe_shaw
};

enum class ParamGroup { kProjection, kEmbedding, kNorm, kPositional };

template <class T>
struct NamedParam {
  std::string name;
  Tensor<T>* tensor;
  ParamGroup group;
};

/// Embedding -> L blocks -> optional final norm -> linear head.
template <class T>
class Model {
 public:
  // All projections zero, norms one, B zero, C ones.
  explicit Model(const ModelConfig& config);

  // Projections uniform in +-1/sqrt(fan_in), embeddings N(0, 0.02^2).
  // Positional carriers draw nothing from the generator, so twins that
  // differ only in pe_kind/urpe share every other weight for a given seed.
  static Model create(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // Every learnable tensor in a fixed order.
  std::vector<NamedParam<T>> parameters();
  std::size_t parameter_count();

  PEDescriptor<T> descriptor(std::size_t layer);

  Var<T> embed(Graph<T>& g, std::span<const int> tokens);
  Var<T> block_forward(Graph<T>& g, const Var<T>& x, std::size_t layer);
  Var<T> project(Graph<T>& g, const Var<T>& x);
  // n x vocab_out logits.
  Var<T> forward(Graph<T>& g, std::span<const int> tokens);
  Tensor<T> logits(std::span<const int> tokens);

  Tensor<T> embedding;  // vocab_in x d
  std::optional<APETable<T>> ape;
  std::vector<LayerParams<T>> layers;
  std::optional<URPEMultiplier<T>> urpe;
  Tensor<T> final_norm;  // d
  Tensor<T> head;        // d x vocab_out

 private:
  ModelConfig config_;
};

/// Text header (magic, config echo, name -> shape manifest) followed by one
/// length-prefixed block of little-endian float64 per parameter.
template <class T>
void save_checkpoint(Model<T>& model, const std::filesystem::path& path);

template <class T>
Model<T> load_checkpoint(const std::filesystem::path& path);

ModelConfig read_checkpoint_config(const std::filesystem::path& path);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace urpe
