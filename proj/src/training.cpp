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
#include "urpe/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

namespace urpe {

void TrainConfig::validate() const {
  if (warmup_steps > steps) {
    throw InputError("train.warmup_steps (" + std::to_string(warmup_steps) +
                     ") exceeds train.steps (" + std::to_string(steps) + ")");
  }
  if (!(peak_lr > 0)) throw InputError("train.peak_lr must be positive");
  if (batch == 0) throw InputError("train.batch must be positive");
  if (eval_every == 0) throw InputError("train.eval_every must be positive");
  if (eval_size == 0) throw InputError("train.eval_size must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw InputError("train.beta1 and train.beta2 must lie in [0, 1)");
  }
  if (!(epsilon > 0)) throw InputError("train.epsilon must be positive");
  if (weight_decay < 0 || grad_clip < 0) {
    throw InputError("train.weight_decay and train.grad_clip must be non-negative");
  }
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || v[0] == '-') {
    throw InputError("train." + key + ": expected a non-negative integer, got '" + v + "'");
  }
  return static_cast<std::size_t>(out);
}

double to_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || !std::isfinite(out)) {
    throw InputError("train." + key + ": expected a real number, got '" + v + "'");
  }
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> config_fields(const TrainConfig& c) {
  return {
      {"steps", std::to_string(c.steps)},
      {"warmup_steps", std::to_string(c.warmup_steps)},
      {"peak_lr", fmt(c.peak_lr)},
      {"beta1", fmt(c.beta1)},
      {"beta2", fmt(c.beta2)},
      {"epsilon", fmt(c.epsilon)},
      {"weight_decay", fmt(c.weight_decay)},
      {"grad_clip", fmt(c.grad_clip)},
      {"batch", std::to_string(c.batch)},
      {"eval_every", std::to_string(c.eval_every)},
      {"eval_size", std::to_string(c.eval_size)},
      {"seed", std::to_string(c.seed)},
  };
}

void set_config_field(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "steps") c.steps = to_size(key, value);
  else if (key == "warmup_steps") c.warmup_steps = to_size(key, value);
  else if (key == "peak_lr") c.peak_lr = to_real(key, value);
  else if (key == "beta1") c.beta1 = to_real(key, value);
  else if (key == "beta2") c.beta2 = to_real(key, value);
  else if (key == "epsilon") c.epsilon = to_real(key, value);
  else if (key == "weight_decay") c.weight_decay = to_real(key, value);
  else if (key == "grad_clip") c.grad_clip = to_real(key, value);
  else if (key == "batch") c.batch = to_size(key, value);
  else if (key == "eval_every") c.eval_every = to_size(key, value);
  else if (key == "eval_size") c.eval_size = to_size(key, value);
  else if (key == "seed") c.seed = to_size(key, value);
  else throw InputError("unknown train key '" + key + "'");
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  const double s = static_cast<double>(std::min(step, cfg.steps));
  const double warm = static_cast<double>(cfg.warmup_steps);
  if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps) return cfg.peak_lr * s / warm;
  const double tail = static_cast<double>(cfg.steps) - warm;
  if (tail <= 0) return 0.0;
  return cfg.peak_lr * (static_cast<double>(cfg.steps) - s) / tail;
}

template <class T>
void adam_step(std::span<const NamedParam<T>> params, AdamState<T>& state,
               double lr, const TrainConfig& cfg) {
  if (!(lr >= 0)) throw ContractError("adam_step: negative learning rate");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor->size(), T{0});
      state.v.emplace_back(p.tensor->size(), T{0});
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractError("adam_step: optimizer state does not match parameter list");
  }
  // Validate everything first so a bad gradient leaves all parameters intact.
  for (const auto& p : params) {
    if (!p.tensor->has_grad()) continue;
    for (T gv : p.tensor->grad()) {
      if (!std::isfinite(gv)) {
        throw NumericError("adam_step: non-finite gradient in parameter '" + p.name + "'");
      }
    }
  }

  double clip_scale = 1.0;
  if (cfg.grad_clip > 0) {
    double sq = 0;
    for (const auto& p : params) {
      if (!p.tensor->has_grad()) continue;
      for (T gv : p.tensor->grad()) sq += static_cast<double>(gv) * gv;
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) clip_scale = cfg.grad_clip / norm;
  }

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T step = static_cast<T>(lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(cfg.epsilon);
  const T scale = static_cast<T>(clip_scale);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i].tensor;
    auto w = p.data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (cfg.weight_decay > 0 && params[i].group == ParamGroup::kProjection) {
      const T keep = static_cast<T>(1.0 - lr * cfg.weight_decay);
      for (auto& x : w) x *= keep;
    }
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const T gj = g[j] * scale;
      m[j] = b1 * m[j] + (T{1} - b1) * gj;
      v[j] = b2 * v[j] + (T{1} - b2) * gj * gj;
      w[j] -= step * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
    }
  }
}

namespace {

// Independent generator streams derived from the run seed: stream 0 feeds
// training batches (index = step), stream 1 the held-out set.
std::uint64_t stream_seed(std::uint64_t seed, std::uint32_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream, static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

TaskBatch make_eval_set(Task task, std::size_t n, std::size_t vocab,
                        const TrainConfig& cfg) {
  return generate(task, n, vocab, cfg.eval_size, stream_seed(cfg.seed, 1, 0));
}

template <class T>
std::pair<double, double> evaluate(Model<T>& model, const TaskBatch& data) {
  double loss = 0;
  std::size_t hits = 0;
  for (std::size_t b = 0; b < data.batch; ++b) {
    Graph<T> g(Graph<T>::Mode::kInference);
    const auto targets = data.target_row(b);
    auto logits = model.forward(g, data.input_row(b));
    loss += static_cast<double>(g.cross_entropy(logits, targets)->val()[0]);
    const auto& lv = logits->val();
    const std::size_t labels = lv.cols();
    for (std::size_t i = 0; i < data.n; ++i) {
      const auto row = std::span<const T>(lv.data()).subspan(i * labels, labels);
      if (static_cast<int>(argmax<T>(row)) == targets[i]) ++hits;
    }
  }
  const double batches = static_cast<double>(data.batch);
  return {loss / batches, static_cast<double>(hits) / (batches * static_cast<double>(data.n))};
}

void write_metrics_csv(const std::vector<MetricRow>& rows,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out << "step,loss,accuracy,lr,wall_ms\n";
  for (const auto& r : rows) {
    out << r.step << ',' << fmt(r.loss) << ',' << fmt(r.accuracy) << ',' << fmt(r.lr)
        << ',' << fmt(r.wall_ms) << '\n';
  }
}

template <class T>
TrainResult train(Model<T>& model, Task task, const TrainConfig& cfg,
                  const TaskBatch& eval_set, const TrainHooks& hooks) {
  cfg.validate();
  const auto& mc = model.config();
  const std::size_t n = eval_set.n;
  const std::size_t labels = label_count(task, n, eval_set.vocab);
  if (eval_set.task != task) throw ContractError("train: eval set is for a different task");
  if (mc.vocab_out < labels) {
    throw ContractError("train: model head has " + std::to_string(mc.vocab_out) +
                        " outputs but the task emits " + std::to_string(labels) + " labels");
  }
  if (mc.vocab_in < eval_set.vocab) {
    throw ContractError("train: model embeds " + std::to_string(mc.vocab_in) +
                        " tokens but the task draws from " + std::to_string(eval_set.vocab));
  }

  auto params = model.parameters();
  for (auto& p : params) {
    p.tensor->set_requires_grad(true);
    p.tensor->drop_grad();
  }
  AdamState<T> state;
  TrainResult result;
  const auto start = std::chrono::steady_clock::now();

  auto record = [&](std::size_t step) {
    const auto [loss, acc] = evaluate(model, eval_set);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    MetricRow row{step, loss, acc, lr_at(step, cfg), ms};
    result.history.push_back(row);
    if (!hooks.metrics_csv.empty()) write_metrics_csv(result.history, hooks.metrics_csv);
    if (hooks.on_eval) hooks.on_eval(row);
    if (!std::isfinite(loss)) {
      throw DivergenceError("training diverged: held-out loss is " + fmt(loss) +
                            " at step " + std::to_string(step));
    }
    if (!hooks.checkpoint.empty()) save_checkpoint(model, hooks.checkpoint);
    result.final_accuracy = acc;
    result.final_loss = loss;
  };

  record(0);
  const T inv_batch = T{1} / static_cast<T>(cfg.batch);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const TaskBatch data = generate(task, n, eval_set.vocab, cfg.batch, stream_seed(cfg.seed, 0, step));
    for (auto& p : params) p.tensor->zero_grad();
    double batch_loss = 0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      Graph<T> g;
      auto loss = g.cross_entropy(model.forward(g, data.input_row(b)), data.target_row(b));
      batch_loss += static_cast<double>(loss->val()[0]);
      g.backward(g.scale(loss, inv_batch));
    }
    if (!std::isfinite(batch_loss)) {
      throw DivergenceError("training diverged: batch loss is " + fmt(batch_loss) +
                            " at step " + std::to_string(step));
    }
    adam_step<T>(params, state, lr_at(step, cfg), cfg);
    const std::size_t done = step + 1;
    if (done % cfg.eval_every == 0 || done == cfg.steps) record(done);
  }
  return result;
}

template void adam_step(std::span<const NamedParam<float>>, AdamState<float>&, double,
                        const TrainConfig&);
template void adam_step(std::span<const NamedParam<double>>, AdamState<double>&, double,
                        const TrainConfig&);
template std::pair<double, double> evaluate(Model<float>&, const TaskBatch&);
template std::pair<double, double> evaluate(Model<double>&, const TaskBatch&);
template TrainResult train(Model<float>&, Task, const TrainConfig&, const TaskBatch&,
                           const TrainHooks&);
template TrainResult train(Model<double>&, Task, const TrainConfig&, const TaskBatch&,
                           const TrainHooks&);

}  // namespace urpe
