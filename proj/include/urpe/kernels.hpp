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
#include <string_view>

// Dense arithmetic inner loops. Every kernel has a portable scalar reference
// implementation and an AVX2+FMA variant; the variant is chosen once at
// startup from the CPU's feature bits and can be overridden for testing.

namespace urpe::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

template <class T>
struct KernelTable {
  // c[m x p] += a[m x k] * b[k x p], all row-major and densely packed.
  void (*gemm)(std::size_t m, std::size_t k, std::size_t p, const T* a,
               const T* b, T* c);
  // c[m x p] += a[m x k] * b^T for b stored as p x k.
  void (*gemm_nt)(std::size_t m, std::size_t k, std::size_t p, const T* a,
                  const T* b, T* c);
  // c[m x p] += a^T * b[k x p] for a stored as k x m.
  void (*gemm_tn)(std::size_t m, std::size_t k, std::size_t p, const T* a,
                  const T* b, T* c);
  T (*dot)(const T* x, const T* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // out = x (*) y, elementwise; out may alias x or y.
  void (*mul)(const T* x, const T* y, T* out, std::size_t n);
  void (*add)(const T* x, const T* y, T* out, std::size_t n);
  // False if any entry is NaN or infinite.
  bool (*all_finite)(const T* x, std::size_t n);
  T (*max)(const T* x, std::size_t n);
  // out[i] = exp(x[i] - shift); returns the sum of out. The float AVX2
  // variant uses a polynomial exp accurate to a few ulp; double always
  // defers to the C library so 64-bit results agree across ISAs.
  T (*exp_shift)(const T* x, T shift, T* out, std::size_t n);
};

template <class T>
const KernelTable<T>& scalar_table();

// Only valid when isa_available(Isa::kAvx2).
template <class T>
const KernelTable<T>& avx2_table();

bool isa_available(Isa isa);

// Best ISA supported by the host, honouring URPE_ISA=scalar|avx2.
Isa detect_isa();

Isa active_isa();

// Throws std::invalid_argument when the ISA is not supported by the host.
void set_active_isa(Isa isa);

template <class T>
const KernelTable<T>& active();

// Restores the previous ISA on scope exit.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : saved_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(saved_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa saved_;
};

}  // namespace urpe::kernels
