#pragma once

// Runtime-dispatched inner loops. Every kernel has a portable scalar
// reference in simd_scalar.cpp; the AVX2 variants in simd_avx2.cpp are
// compiled with -mavx2 -mfma and only selected when the CPU reports AVX2.
//
// All accumulation happens in double. axpy variants are elementwise and
// bit-identical between ISAs; dot differs only in summation order.

#include <cstddef>
#include <string_view>

namespace segref::simd {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i], accumulated in double
  double (*dot)(const float* a, const float* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double* y, double alpha, const float* x, std::size_t n);
  // out[i] = static_cast<float>(x[i])
  void (*narrow)(float* out, const double* x, std::size_t n);
};

const KernelTable& scalar_kernels() noexcept;

/// nullptr when the AVX2 variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_kernels() noexcept;

/// The table used by all library kernels. Chosen on first use: AVX2 when
/// available unless SEGREF_ISA=scalar is set in the environment.
const KernelTable& active() noexcept;

/// Forces a specific ISA (tests, benchmarking). Returns false if the
/// requested ISA is unavailable; the active table is then unchanged.
bool set_isa(Isa isa) noexcept;

std::string_view isa_name(Isa isa) noexcept;

}  // namespace segref::simd
