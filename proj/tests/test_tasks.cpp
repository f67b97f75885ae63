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
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "urpe/errors.hpp"
#include "urpe/tasks.hpp"

using namespace urpe;

TEST_CASE("gen_pi targets are positions") {
  const auto b = gen_pi(6, 10, 4, 1);
  CHECK(b.inputs.size() == 24);
  for (std::size_t r = 0; r < 4; ++r) {
    const auto t = b.target_row(r);
    for (std::size_t i = 0; i < 6; ++i) CHECK(t[i] == static_cast<int>(i));
  }
  for (int v : b.inputs) CHECK((v >= 0 && v < 10));

  const auto again = gen_pi(6, 10, 4, 1);
  CHECK(again.inputs == b.inputs);
  const auto other = gen_pi(6, 10, 4, 2);
  CHECK(other.inputs != b.inputs);
  CHECK(other.targets == b.targets);
  CHECK(label_count(Task::kPi, 64, 10) == 64);
}

TEST_CASE("gen_etp emits even tokens then EOS") {
  const auto b = gen_etp(8, 5, 50, 3);
  CHECK(b.eos_id == 5);
  for (std::size_t r = 0; r < 50; ++r) {
    const auto in = b.input_row(r);
    const auto t = b.target_row(r);
    for (std::size_t k = 1; k <= 4; ++k) CHECK(t[k - 1] == in[2 * k - 1]);
    for (std::size_t k = 4; k < 8; ++k) CHECK(t[k] == 5);
  }
  CHECK(label_count(Task::kEtp, 8, 5) == 6);

  // n = 2, input (a, b) -> (b, EOS)
  const auto two = gen_etp(2, 3, 10, 4);
  for (std::size_t r = 0; r < 10; ++r) {
    CHECK(two.target_row(r)[0] == two.input_row(r)[1]);
    CHECK(two.target_row(r)[1] == 3);
  }
  // a single-token vocabulary gives the constant-input case
  const auto same = gen_etp(6, 1, 2, 5);
  for (int v : same.inputs) CHECK(v == 0);
  for (std::size_t r = 0; r < 2; ++r) {
    const auto t = same.target_row(r);
    CHECK(t[0] == 0);
    CHECK(t[2] == 0);
    CHECK(t[3] == 1);
    CHECK(t[5] == 1);
  }

  CHECK_THROWS_AS(gen_etp(7, 5, 1, 0), InputError);
  CHECK_THROWS_AS(gen_pi(0, 5, 1, 0), InputError);
  CHECK_THROWS_AS(gen_pi(3, 0, 1, 0), InputError);
  CHECK(gen_etp(8, 5, 3, 9).inputs == gen_etp(8, 5, 3, 9).inputs);
}

TEST_CASE("token_accuracy counts argmax hits") {
  const int labels = 4;
  const std::vector<int> targets{0, 3, 2, 1};
  Tensor<double> onehot({4, 4});
  Tensor<double> miss({4, 4});
  Tensor<double> half({2, 2, 4});
  for (int r = 0; r < 4; ++r) {
    onehot.at(r, targets[r]) = 1.0;
    miss.at(r, (targets[r] + 1) % labels) = 1.0;
    half[r * 4 + (r < 2 ? targets[r] : (targets[r] + 2) % labels)] = 5.0;
  }
  CHECK(token_accuracy(onehot, targets) == 1.0);
  CHECK(token_accuracy(miss, targets) == 0.0);
  CHECK(token_accuracy(half, targets) == 0.5);

  // ties resolve to the lowest label
  Tensor<float> tie({1, 3}, {2.0f, 2.0f, 1.0f});
  CHECK(token_accuracy(tie, std::vector<int>{0}) == 1.0);
  CHECK(token_accuracy(tie, std::vector<int>{1}) == 0.0);
  CHECK_THROWS_AS(token_accuracy(onehot, std::vector<int>{0}), DimensionError);
}

TEST_CASE("dataset dump format") {
  const auto path = std::filesystem::temp_directory_path() / "urpe_tasks_dump.txt";
  const auto b = gen_pi(3, 4, 2, 0);
  dump_dataset(b, path);
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    REQUIRE(tab != std::string::npos);
    CHECK(line.substr(tab + 1) == "1 2 3");
    ++lines;
  }
  CHECK(lines == 2);
  std::filesystem::remove(path);
}
