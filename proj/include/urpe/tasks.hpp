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
#include <span>
#include <string>
#include <vector>

#include "urpe/tensor.hpp"

namespace urpe {

enum class Task { kPi, kEtp };

const char* task_name(Task t);
Task parse_task(const std::string& text);

/// Row-major token ids and per-position labels for batch sequences of
/// length n.
struct TaskBatch {
  Task task = Task::kPi;
  std::size_t batch = 0;
  std::size_t n = 0;
  std::size_t vocab = 0;
  int eos_id = -1;  // vocab for ETP; unused by PI
  std::vector<int> inputs;
  std::vector<int> targets;

  std::span<const int> input_row(std::size_t b) const {
    return std::span<const int>(inputs).subspan(b * n, n);
  }
  std::span<const int> target_row(std::size_t b) const {
    return std::span<const int>(targets).subspan(b * n, n);
  }
};

/// Size of the output label space: n position labels for PI, the token
/// vocabulary plus EOS for ETP.
std::size_t label_count(Task task, std::size_t n, std::size_t vocab);

// Targets are the 0-based positions 0..n-1.
TaskBatch gen_pi(std::size_t n, std::size_t vocab, std::size_t batch,
                 std::uint64_t seed);

// Targets (w_2, w_4, ..., w_n, EOS, ..., EOS); odd n is an InputError.
TaskBatch gen_etp(std::size_t n, std::size_t vocab, std::size_t batch,
                  std::uint64_t seed);

TaskBatch generate(Task task, std::size_t n, std::size_t vocab,
                   std::size_t batch, std::uint64_t seed);

/// Fraction of rows of logits (rows x labels, or batch x n x labels) whose
/// argmax matches the target. Ties go to the lowest label.
template <class T>
double token_accuracy(const Tensor<T>& logits, std::span<const int> targets);

/// Index of the largest entry; the first one wins a tie.
template <class T>
std::size_t argmax(std::span<const T> row);

/// One line per sample: input ids, a tab, target ids. PI targets are
/// written 1-based, the way the task is usually stated.
void dump_dataset(const TaskBatch& batch, const std::filesystem::path& path);

}  // namespace urpe
