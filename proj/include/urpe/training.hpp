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
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "urpe/errors.hpp"
#include "urpe/model.hpp"
#include "urpe/tasks.hpp"

namespace urpe {

struct TrainConfig {
  std::size_t steps = 5000;
  std::size_t warmup_steps = 500;
  double peak_lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 0.0;  // global-norm threshold; 0 disables
  std::size_t batch = 64;
  std::size_t eval_every = 500;
  std::size_t eval_size = 10000;
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<std::pair<std::string, std::string>> config_fields(const TrainConfig& c);
void set_config_field(TrainConfig& c, const std::string& key, const std::string& value);

/// Linear warm-up from 0 to peak_lr, then linear decay to 0 at cfg.steps.
double lr_at(std::size_t step, const TrainConfig& cfg);

template <class T>
struct AdamState {
  std::vector<Storage<T>> m;
  std::vector<Storage<T>> v;
  std::size_t t = 0;
};

/// One bias-corrected Adam update from each parameter's accumulated grad.
/// Decoupled weight decay touches only ParamGroup::kProjection tensors.
/// A non-finite gradient throws NumericError naming the parameter, before
/// anything is modified.
template <class T>
void adam_step(std::span<const NamedParam<T>> params, AdamState<T>& state,
               double lr, const TrainConfig& cfg);

/// Raised when the training loss stops being finite.
class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

struct MetricRow {
  std::size_t step;
  double loss;      // mean cross-entropy on the held-out set
  double accuracy;  // token accuracy on the held-out set
  double lr;
  double wall_ms;
};

struct TrainHooks {
  // Written after every eval so a crash leaves a usable log.
  std::filesystem::path metrics_csv;
  // Rewritten after every finite eval: the last good checkpoint survives
  // divergence.
  std::filesystem::path checkpoint;
  std::function<void(const MetricRow&)> on_eval;
};

struct TrainResult {
  std::vector<MetricRow> history;
  double final_accuracy = 0.0;
  double final_loss = 0.0;
};

/// Held-out evaluation set, seeded independently of the training stream.
TaskBatch make_eval_set(Task task, std::size_t n, std::size_t vocab,
                        const TrainConfig& cfg);

/// Mean cross-entropy and token accuracy over every sequence of a batch.
template <class T>
std::pair<double, double> evaluate(Model<T>& model, const TaskBatch& data);

/// Fresh batches every step (infinite-data regime), per-sequence graphs
/// whose gradients are summed in a fixed order, evaluation at step 0, every
/// eval_every steps and at the end.
template <class T>
TrainResult train(Model<T>& model, Task task, const TrainConfig& cfg,
                  const TaskBatch& eval_set, const TrainHooks& hooks = {});

void write_metrics_csv(const std::vector<MetricRow>& rows,
                       const std::filesystem::path& path);

}  // namespace urpe
