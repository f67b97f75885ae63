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

#include "urpe/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "urpe/errors.hpp"

namespace urpe {
namespace memory {
namespace {
std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};
}  // namespace

std::size_t live_bytes() { return g_live.load(std::memory_order_relaxed); }
std::size_t peak_bytes() { return g_peak.load(std::memory_order_relaxed); }
void reset_peak() { g_peak.store(live_bytes(), std::memory_order_relaxed); }

void note_alloc(std::size_t bytes) {
  const std::size_t now =
      g_live.fetch_add(bytes, std::memory_order_relaxed) + bytes;
  std::size_t peak = g_peak.load(std::memory_order_relaxed);
  while (now > peak &&
         !g_peak.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
  }
}

void note_free(std::size_t bytes) {
  g_live.fetch_sub(bytes, std::memory_order_relaxed);
}

}  // namespace memory

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
void validate_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
  for (std::size_t s : shape) {
    if (s == 0) {
      throw DimensionError("tensor dimensions must be positive, got " +
                           shape_string(shape));
    }
  }
}
}  // namespace

template <class T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(element_count(shape_), fill);
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::span<const T> values)
    : shape_(std::move(shape)) {
  validate_shape(shape_);
  if (values.size() != element_count(shape_)) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_string(shape_));
  }
  data_.assign(values.begin(), values.end());
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::initializer_list<T> values)
    : Tensor(std::move(shape), std::span<const T>(values.begin(), values.size())) {}

template <class T>
std::size_t Tensor<T>::rows() const {
  if (shape_.size() != 2) {
    throw DimensionError("expected a matrix, got " + shape_string(shape_));
  }
  return shape_[0];
}

template <class T>
std::size_t Tensor<T>::cols() const {
  if (shape_.size() != 2) {
    throw DimensionError("expected a matrix, got " + shape_string(shape_));
  }
  return shape_[1];
}

template <class T>
std::span<T> Tensor<T>::grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), T{0});
  return grad_;
}

template <class T>
void Tensor<T>::zero_grad() {
  std::fill(grad_.begin(), grad_.end(), T{0});
}

template <class T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <class T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](T v) { return std::isfinite(v); });
}

template <class T>
Tensor<T> identity(std::size_t n) {
  Tensor<T> out({n, n});
  for (std::size_t i = 0; i < n; ++i) out.at(i, i) = T{1};
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> identity<float>(std::size_t);
template Tensor<double> identity<double>(std::size_t);

}  // namespace urpe
