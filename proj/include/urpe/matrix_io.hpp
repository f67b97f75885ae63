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

#include <cstdint>
#include <filesystem>
#include <vector>

#include "urpe/tensor.hpp"

namespace urpe {

/// Row-major CSV, one matrix row per line, shortest round-trip formatting.
template <class T>
void write_matrix_csv(const Tensor<T>& m, const std::filesystem::path& path);

Tensor<double> read_matrix_csv(const std::filesystem::path& path);

/// 8-bit grayscale pixels under per-matrix min-max normalization. A constant
/// matrix maps to mid-gray 128.
template <class T>
std::vector<std::uint8_t> heatmap_pixels(const Tensor<T>& m);

/// Binary PGM (P5, maxval 255) of heatmap_pixels(m).
template <class T>
void write_matrix_pgm(const Tensor<T>& m, const std::filesystem::path& path);

}  // namespace urpe
