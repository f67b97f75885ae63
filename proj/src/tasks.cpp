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
#include "urpe/tasks.hpp"

#include <fstream>
#include <random>

#include "urpe/errors.hpp"

namespace urpe {

const char* task_name(Task t) { return t == Task::kPi ? "pi" : "etp"; }

Task parse_task(const std::string& text) {
  if (text == "pi") return Task::kPi;
  if (text == "etp") return Task::kEtp;
  throw InputError("unknown task '" + text + "' (expected pi|etp)");
}

std::size_t label_count(Task task, std::size_t n, std::size_t vocab) {
  return task == Task::kPi ? n : vocab + 1;
}

namespace {

TaskBatch sample_inputs(Task task, std::size_t n, std::size_t vocab,
                        std::size_t batch, std::uint64_t seed) {
  if (n == 0) throw InputError("task length must be at least 1");
  if (vocab == 0) throw InputError("task vocabulary must be at least 1");
  TaskBatch out;
  out.task = task;
  out.batch = batch;
  out.n = n;
  out.vocab = vocab;
  out.inputs.resize(batch * n);
  out.targets.resize(batch * n);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> token(0, static_cast<int>(vocab) - 1);
  for (auto& t : out.inputs) t = token(rng);
  return out;
}

}  // namespace

TaskBatch gen_pi(std::size_t n, std::size_t vocab, std::size_t batch,
                 std::uint64_t seed) {
  TaskBatch out = sample_inputs(Task::kPi, n, vocab, batch, seed);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i) out.targets[b * n + i] = static_cast<int>(i);
  return out;
}

TaskBatch gen_etp(std::size_t n, std::size_t vocab, std::size_t batch,
                  std::uint64_t seed) {
  if (n % 2 != 0 || n < 2) {
    throw InputError("etp needs an even length >= 2, got " + std::to_string(n));
  }
  TaskBatch out = sample_inputs(Task::kEtp, n, vocab, batch, seed);
  out.eos_id = static_cast<int>(vocab);
  const std::size_t half = n / 2;
  for (std::size_t b = 0; b < batch; ++b) {
    const int* in = out.inputs.data() + b * n;
    int* tg = out.targets.data() + b * n;
    // 1-based w_{2k} is 0-based index 2k - 1
    for (std::size_t k = 0; k < half; ++k) tg[k] = in[2 * k + 1];
    for (std::size_t k = half; k < n; ++k) tg[k] = out.eos_id;
  }
  return out;
}

TaskBatch generate(Task task, std::size_t n, std::size_t vocab,
                   std::size_t batch, std::uint64_t seed) {
  return task == Task::kPi ? gen_pi(n, vocab, batch, seed)
                           : gen_etp(n, vocab, batch, seed);
}

template <class T>
std::size_t argmax(std::span<const T> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

template <class T>
double token_accuracy(const Tensor<T>& logits, std::span<const int> targets) {
  if (logits.rank() < 2) {
    throw DimensionError("token_accuracy: logits " + shape_string(logits.shape()) +
                         " need a label axis");
  }
  const std::size_t labels = logits.shape().back();
  const std::size_t rows = logits.size() / labels;
  if (rows != targets.size()) {
    throw DimensionError("token_accuracy: " + std::to_string(rows) +
                         " logit rows for " + std::to_string(targets.size()) +
                         " targets");
  }
  if (rows == 0) return 0.0;
  std::size_t hits = 0;
  const auto data = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    if (static_cast<int>(argmax<T>(data.subspan(r * labels, labels))) == targets[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rows);
}

void dump_dataset(const TaskBatch& batch, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  const int shift = batch.task == Task::kPi ? 1 : 0;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    const auto in = batch.input_row(b);
    const auto tg = batch.target_row(b);
    for (std::size_t i = 0; i < in.size(); ++i) out << (i ? " " : "") << in[i];
    out << '\t';
    for (std::size_t i = 0; i < tg.size(); ++i) out << (i ? " " : "") << tg[i] + shift;
    out << '\n';
  }
  if (!out) throw InputError("failed writing " + path.string());
}

template double token_accuracy(const Tensor<float>&, std::span<const int>);
template double token_accuracy(const Tensor<double>&, std::span<const int>);
template std::size_t argmax(std::span<const float>);
template std::size_t argmax(std::span<const double>);

}  // namespace urpe
