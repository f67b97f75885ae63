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

#include "urpe/kernels.hpp"

#include <cmath>

namespace urpe::kernels {
namespace {

template <class T>
void gemm_scalar(std::size_t m, std::size_t k, std::size_t p, const T* a,
                 const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * p;
    for (std::size_t l = 0; l < k; ++l) {
      const T av = a[i * k + l];
      const T* brow = b + l * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void gemm_nt_scalar(std::size_t m, std::size_t k, std::size_t p, const T* a,
                    const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      T acc{0};
      for (std::size_t l = 0; l < k; ++l) acc += a[i * k + l] * b[j * k + l];
      c[i * p + j] += acc;
    }
  }
}

template <class T>
void gemm_tn_scalar(std::size_t m, std::size_t k, std::size_t p, const T* a,
                    const T* b, T* c) {
  for (std::size_t l = 0; l < k; ++l) {
    const T* brow = b + l * p;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = a[l * m + i];
      T* crow = c + i * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
T dot_scalar(const T* x, const T* y, std::size_t n) {
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class T>
void axpy_scalar(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void mul_scalar(const T* x, const T* y, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

template <class T>
void add_scalar(const T* x, const T* y, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

template <class T>
bool all_finite_scalar(const T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i])) return false;
  }
  return true;
}

template <class T>
T max_scalar(const T* x, std::size_t n) {
  T best = x[0];
  for (std::size_t i = 1; i < n; ++i) best = x[i] > best ? x[i] : best;
  return best;
}

template <class T>
T exp_shift_scalar(const T* x, T shift, T* out, std::size_t n) {
  T total{0};
  for (std::size_t i = 0; i < n; ++i) total += (out[i] = std::exp(x[i] - shift));
  return total;
}

template <class T>
constexpr KernelTable<T> kScalar{&gemm_scalar<T>,    &gemm_nt_scalar<T>,
                                 &gemm_tn_scalar<T>, &dot_scalar<T>,
                                 &axpy_scalar<T>,    &mul_scalar<T>,
                                 &add_scalar<T>,     &all_finite_scalar<T>,
                                 &max_scalar<T>,     &exp_shift_scalar<T>};

}  // namespace

template <class T>
const KernelTable<T>& scalar_table() {
  return kScalar<T>;
}

template const KernelTable<float>& scalar_table<float>();
template const KernelTable<double>& scalar_table<double>();

}  // namespace urpe::kernels
