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

// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma
// and must only be entered after a runtime feature check.

#include <immintrin.h>

#include <math.h>

#include <cstddef>

#include "urpe/kernels.hpp"

namespace urpe::kernels {
namespace {

template <class T>
struct Vec;

template <>
struct Vec<float> {
  using Reg = __m256;
  static constexpr std::size_t kWidth = 8;
  static Reg zero() { return _mm256_setzero_ps(); }
  static Reg set1(float v) { return _mm256_set1_ps(v); }
  static Reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, Reg v) { _mm256_storeu_ps(p, v); }
  static Reg fmadd(Reg a, Reg b, Reg c) { return _mm256_fmadd_ps(a, b, c); }
  static Reg add(Reg a, Reg b) { return _mm256_add_ps(a, b); }
  static Reg mul(Reg a, Reg b) { return _mm256_mul_ps(a, b); }
  static Reg max(Reg a, Reg b) { return _mm256_max_ps(a, b); }
  static float hmax(Reg v) {
    __m128 lo = _mm_max_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
    lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_max_ss(lo, _mm_shuffle_ps(lo, lo, 1));
    return _mm_cvtss_f32(lo);
  }
  static float hsum(Reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
  }
};

template <>
struct Vec<double> {
  using Reg = __m256d;
  static constexpr std::size_t kWidth = 4;
  static Reg zero() { return _mm256_setzero_pd(); }
  static Reg set1(double v) { return _mm256_set1_pd(v); }
  static Reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, Reg v) { _mm256_storeu_pd(p, v); }
  static Reg fmadd(Reg a, Reg b, Reg c) { return _mm256_fmadd_pd(a, b, c); }
  static Reg add(Reg a, Reg b) { return _mm256_add_pd(a, b); }
  static Reg mul(Reg a, Reg b) { return _mm256_mul_pd(a, b); }
  static Reg max(Reg a, Reg b) { return _mm256_max_pd(a, b); }
  static double hmax(Reg v) {
    __m128d lo = _mm_max_pd(_mm256_castpd256_pd128(v), _mm256_extractf128_pd(v, 1));
    return _mm_cvtsd_f64(_mm_max_sd(lo, _mm_unpackhi_pd(lo, lo)));
  }
  static double hsum(Reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
  }
};

constexpr std::size_t kRowBlock = 6;

// Inline templates from the standard library are avoided in this file: an
// AVX2-compiled instantiation could otherwise be picked by the linker for
// callers on hosts without AVX2.
constexpr std::size_t min_size(std::size_t a, std::size_t b) {
  return a < b ? a : b;
}

template <class T>
struct PackBuffer {
  T* data = nullptr;
  std::size_t capacity = 0;

  PackBuffer() = default;
  PackBuffer(const PackBuffer&) = delete;
  PackBuffer& operator=(const PackBuffer&) = delete;
  ~PackBuffer() { delete[] data; }

  T* reserve(std::size_t n) {
    if (n > capacity) {
      delete[] data;
      data = new T[n];
      capacity = n;
    }
    return data;
  }
};

// Computes an mr x (2 * width) tile of a * packed_b and adds the first `cols`
// columns into c. packed_b is k rows of exactly 2 * width values. Element
// (r, l) of the a panel lives at a[r * rs + l * cs], which lets the same tile
// serve both a and a^T. One of the strides is always 1; kUnitCol says which,
// so the hot loop only ever advances a single pointer.
template <class T, std::size_t MR, bool kUnitCol>
void micro_tile(std::size_t k, const T* a, std::size_t rs, std::size_t cs,
                const T* packed_b, T* c, std::size_t ldc, std::size_t cols) {
  using V = Vec<T>;
  constexpr std::size_t W = V::kWidth;
  typename V::Reg acc0[MR];
  typename V::Reg acc1[MR];
  for (std::size_t r = 0; r < MR; ++r) {
    acc0[r] = V::zero();
    acc1[r] = V::zero();
  }
  const T* rows[MR];
  for (std::size_t r = 0; r < MR; ++r) rows[r] = a + r * rs;
  for (std::size_t l = 0; l < k; ++l) {
    const auto b0 = V::load(packed_b + l * 2 * W);
    const auto b1 = V::load(packed_b + l * 2 * W + W);
    if constexpr (kUnitCol) {
      for (std::size_t r = 0; r < MR; ++r) {
        const auto av = V::set1(rows[r][l]);
        acc0[r] = V::fmadd(av, b0, acc0[r]);
        acc1[r] = V::fmadd(av, b1, acc1[r]);
      }
    } else {
      const T* col = a + l * cs;  // rs == 1: the panel column is contiguous
      for (std::size_t r = 0; r < MR; ++r) {
        const auto av = V::set1(col[r]);
        acc0[r] = V::fmadd(av, b0, acc0[r]);
        acc1[r] = V::fmadd(av, b1, acc1[r]);
      }
    }
  }
  if (cols == 2 * W) {
    for (std::size_t r = 0; r < MR; ++r) {
      T* crow = c + r * ldc;
      V::store(crow, V::add(V::load(crow), acc0[r]));
      V::store(crow + W, V::add(V::load(crow + W), acc1[r]));
    }
    return;
  }
  alignas(32) T tile[2 * W];
  for (std::size_t r = 0; r < MR; ++r) {
    V::store(tile, acc0[r]);
    V::store(tile + W, acc1[r]);
    T* crow = c + r * ldc;
    for (std::size_t j = 0; j < cols; ++j) crow[j] += tile[j];
  }
}

template <class T, bool kUnitCol>
void micro_dispatch(std::size_t rows, std::size_t k, const T* a,
                    std::size_t rs, std::size_t cs, const T* packed_b, T* c,
                    std::size_t ldc, std::size_t cols) {
  switch (rows) {
    case 6: micro_tile<T, 6, kUnitCol>(k, a, rs, cs, packed_b, c, ldc, cols); break;
    case 5: micro_tile<T, 5, kUnitCol>(k, a, rs, cs, packed_b, c, ldc, cols); break;
    case 4: micro_tile<T, 4, kUnitCol>(k, a, rs, cs, packed_b, c, ldc, cols); break;
    case 3: micro_tile<T, 3, kUnitCol>(k, a, rs, cs, packed_b, c, ldc, cols); break;
    case 2: micro_tile<T, 2, kUnitCol>(k, a, rs, cs, packed_b, c, ldc, cols); break;
    default: micro_tile<T, 1, kUnitCol>(k, a, rs, cs, packed_b, c, ldc, cols); break;
  }
}

// Shared driver. b is read as b[l * b_rs + j * b_cs] and a as
// a[i * a_rs + l * a_cs]; c is always m x p row-major.
template <class T>
void gemm_strided(std::size_t m, std::size_t k, std::size_t p, const T* a,
                  std::size_t a_rs, std::size_t a_cs, const T* b,
                  std::size_t b_rs, std::size_t b_cs, T* c) {
  constexpr std::size_t NR = 2 * Vec<T>::kWidth;
  if (m == 0 || p == 0 || k == 0) return;
  thread_local PackBuffer<T> buffer;
  T* packed = buffer.reserve(k * NR);
  for (std::size_t j0 = 0; j0 < p; j0 += NR) {
    const std::size_t cols = min_size(NR, p - j0);
    for (std::size_t l = 0; l < k; ++l) {
      const T* src = b + l * b_rs + j0 * b_cs;
      T* dst = packed + l * NR;
      std::size_t j = 0;
      for (; j < cols; ++j) dst[j] = src[j * b_cs];
      for (; j < NR; ++j) dst[j] = T{0};
    }
    for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
      const std::size_t rows = min_size(kRowBlock, m - i0);
      if (a_cs == 1) {
        micro_dispatch<T, true>(rows, k, a + i0 * a_rs, a_rs, a_cs, packed,
                                c + i0 * p + j0, p, cols);
      } else {
        micro_dispatch<T, false>(rows, k, a + i0 * a_rs, a_rs, a_cs, packed,
                                 c + i0 * p + j0, p, cols);
      }
    }
  }
}

template <class T>
void gemm_avx2(std::size_t m, std::size_t k, std::size_t p, const T* a,
               const T* b, T* c) {
  gemm_strided<T>(m, k, p, a, k, 1, b, p, 1, c);
}

template <class T>
void gemm_nt_avx2(std::size_t m, std::size_t k, std::size_t p, const T* a,
                  const T* b, T* c) {
  gemm_strided<T>(m, k, p, a, k, 1, b, 1, k, c);
}

template <class T>
void gemm_tn_avx2(std::size_t m, std::size_t k, std::size_t p, const T* a,
                  const T* b, T* c) {
  gemm_strided<T>(m, k, p, a, 1, m, b, p, 1, c);
}

template <class T>
T dot_avx2(const T* x, const T* y, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t W = V::kWidth;
  auto acc0 = V::zero();
  auto acc1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * W <= n; i += 2 * W) {
    acc0 = V::fmadd(V::load(x + i), V::load(y + i), acc0);
    acc1 = V::fmadd(V::load(x + i + W), V::load(y + i + W), acc1);
  }
  for (; i + W <= n; i += W) acc0 = V::fmadd(V::load(x + i), V::load(y + i), acc0);
  T acc = V::hsum(V::add(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class T>
void axpy_avx2(T alpha, const T* x, T* y, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t W = V::kWidth;
  const auto av = V::set1(alpha);
  std::size_t i = 0;
  for (; i + W <= n; i += W) V::store(y + i, V::fmadd(av, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void mul_avx2(const T* x, const T* y, T* out, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t W = V::kWidth;
  std::size_t i = 0;
  for (; i + W <= n; i += W) V::store(out + i, V::mul(V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

template <class T>
void add_avx2(const T* x, const T* y, T* out, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t W = V::kWidth;
  std::size_t i = 0;
  for (; i + W <= n; i += W) V::store(out + i, V::add(V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

template <class T>
bool all_finite_avx2(const T* x, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t W = V::kWidth;
  // x * 0 is 0 for finite x and NaN otherwise, so a single NaN poisons acc.
  const auto zero = V::zero();
  auto acc = V::zero();
  std::size_t i = 0;
  for (; i + W <= n; i += W) acc = V::fmadd(V::load(x + i), zero, acc);
  T tail = V::hsum(acc);
  for (; i < n; ++i) tail += x[i] * T{0};
  return tail == tail;
}

template <class T>
T max_avx2(const T* x, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t W = V::kWidth;
  std::size_t i = 0;
  T best = x[0];
  if (n >= W) {
    auto acc = V::load(x);
    for (i = W; i + W <= n; i += W) acc = V::max(acc, V::load(x + i));
    best = V::hmax(acc);
  }
  for (; i < n; ++i) best = x[i] > best ? x[i] : best;
  return best;
}

// Cephes-style single precision exp: range reduction by ln 2 split into a
// high and low part, a degree-5 polynomial, then exponent reconstruction.
// Inputs are clamped to [-87, 88] so the rebuilt exponent stays normal.
__m256 exp_ps(__m256 x) {
  x = _mm256_min_ps(x, _mm256_set1_ps(88.0f));
  x = _mm256_max_ps(x, _mm256_set1_ps(-87.0f));
  __m256 fx = _mm256_round_ps(_mm256_mul_ps(x, _mm256_set1_ps(1.44269504088896341f)),
                              _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(0.693359375f), x);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(-2.12194440e-4f), x);
  __m256 y = _mm256_set1_ps(1.9875691500e-4f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
  y = _mm256_fmadd_ps(y, _mm256_mul_ps(x, x), x);
  y = _mm256_add_ps(y, _mm256_set1_ps(1.0f));
  __m256i e = _mm256_add_epi32(_mm256_cvtps_epi32(fx), _mm256_set1_epi32(127));
  return _mm256_mul_ps(y, _mm256_castsi256_ps(_mm256_slli_epi32(e, 23)));
}

float exp_shift_avx2_f(const float* x, float shift, float* out, std::size_t n) {
  const __m256 s = _mm256_set1_ps(shift);
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = exp_ps(_mm256_sub_ps(_mm256_loadu_ps(x + i), s));
    _mm256_storeu_ps(out + i, v);
    acc = _mm256_add_ps(acc, v);
  }
  if (i < n) {
    alignas(32) float buf[8] = {-1e30f, -1e30f, -1e30f, -1e30f,
                                -1e30f, -1e30f, -1e30f, -1e30f};
    for (std::size_t j = i; j < n; ++j) buf[j - i] = x[j] - shift;
    alignas(32) float res[8];
    _mm256_store_ps(res, exp_ps(_mm256_load_ps(buf)));
    for (std::size_t j = i; j < n; ++j) {
      out[j] = res[j - i];
    }
    for (std::size_t j = n - i; j < 8; ++j) res[j] = 0.0f;
    acc = _mm256_add_ps(acc, _mm256_load_ps(res));
  }
  return Vec<float>::hsum(acc);
}

double exp_shift_avx2_d(const double* x, double shift, double* out,
                        std::size_t n) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += (out[i] = ::exp(x[i] - shift));
  return total;
}

template <class T>
struct ExpShift;
template <>
struct ExpShift<float> {
  static constexpr auto fn = &exp_shift_avx2_f;
};
template <>
struct ExpShift<double> {
  static constexpr auto fn = &exp_shift_avx2_d;
};

template <class T>
const KernelTable<T> kAvx2{&gemm_avx2<T>,       &gemm_nt_avx2<T>,
                           &gemm_tn_avx2<T>,    &dot_avx2<T>,
                           &axpy_avx2<T>,       &mul_avx2<T>,
                           &add_avx2<T>,        &all_finite_avx2<T>,
                           &max_avx2<T>,        ExpShift<T>::fn};

}  // namespace

template <class T>
const KernelTable<T>& avx2_table() {
  return kAvx2<T>;
}

template const KernelTable<float>& avx2_table<float>();
template const KernelTable<double>& avx2_table<double>();

}  // namespace urpe::kernels
