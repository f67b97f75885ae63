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
#include "urpe/matrix_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "urpe/errors.hpp"

namespace urpe {
namespace {

template <class T>
std::string format_value(T v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

template <class T>
void write_matrix_csv(const Tensor<T>& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  const std::size_t rows = m.rows(), cols = m.cols();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (j) out << ',';
      out << format_value(m.at(i, j));
    }
    out << '\n';
  }
}

Tensor<double> read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t count = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = 0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
        throw InputError(path.string() + ": bad number '" + cell + "'");
      }
      values.push_back(v);
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) throw InputError(path.string() + ": ragged row " + std::to_string(rows));
    ++rows;
  }
  if (rows == 0) throw InputError(path.string() + ": empty matrix");
  return Tensor<double>({rows, cols}, std::span<const double>(values));
}

template <class T>
std::vector<std::uint8_t> heatmap_pixels(const Tensor<T>& m) {
  const auto data = m.data();
  const auto [lo_it, hi_it] = std::minmax_element(data.begin(), data.end());
  const double lo = static_cast<double>(*lo_it), hi = static_cast<double>(*hi_it);
  std::vector<std::uint8_t> px(data.size(), 128);
  if (hi > lo) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double t = (static_cast<double>(data[i]) - lo) / (hi - lo);
      px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
    }
  }
  return px;
}

template <class T>
void write_matrix_pgm(const Tensor<T>& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  const auto px = heatmap_pixels(m);
  out << "P5\n" << m.cols() << ' ' << m.rows() << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()),
            static_cast<std::streamsize>(px.size()));
}

template void write_matrix_csv(const Tensor<float>&, const std::filesystem::path&);
template void write_matrix_csv(const Tensor<double>&, const std::filesystem::path&);
template std::vector<std::uint8_t> heatmap_pixels(const Tensor<float>&);
template std::vector<std::uint8_t> heatmap_pixels(const Tensor<double>&);
template void write_matrix_pgm(const Tensor<float>&, const std::filesystem::path&);
template void write_matrix_pgm(const Tensor<double>&, const std::filesystem::path&);

}  // namespace urpe
