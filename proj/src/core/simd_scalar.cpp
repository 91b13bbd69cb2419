#include <atomic>
#include <cstdlib>
#include <string_view>

#include "segref/core/simd.hpp"

namespace segref::simd {

namespace detail {
const KernelTable* avx2_table() noexcept;  // simd_avx2.cpp or stub
}

namespace {

double dot_scalar(const float* a, const float* b, std::size_t n) {
  // four partial sums, combined pairwise
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += static_cast<double>(a[i]) * b[i];
    s1 += static_cast<double>(a[i + 1]) * b[i + 1];
    s2 += static_cast<double>(a[i + 2]) * b[i + 2];
    s3 += static_cast<double>(a[i + 3]) * b[i + 3];
  }
  for (; i < n; ++i) s0 += static_cast<double>(a[i]) * b[i];
  return (s0 + s1) + (s2 + s3);
}

void axpy_scalar(double* y, double alpha, const float* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double prod = alpha * static_cast<double>(x[i]);
    y[i] = y[i] + prod;
  }
}

void narrow_scalar(float* out, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(x[i]);
}

constexpr KernelTable kScalar{Isa::kScalar, &dot_scalar, &axpy_scalar, &narrow_scalar};

const KernelTable* initial_table() noexcept {
  if (const char* env = std::getenv("SEGREF_ISA")) {
    if (std::string_view(env) == "scalar") return &kScalar;
  }
  if (const KernelTable* t = detail::avx2_table()) return t;
  return &kScalar;
}

std::atomic<const KernelTable*>& slot() noexcept {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& scalar_kernels() noexcept { return kScalar; }

const KernelTable* avx2_kernels() noexcept { return detail::avx2_table(); }

const KernelTable& active() noexcept { return *slot().load(std::memory_order_acquire); }

bool set_isa(Isa isa) noexcept {
  const KernelTable* t = isa == Isa::kScalar ? &kScalar : detail::avx2_table();
  if (t == nullptr) return false;
  slot().store(t, std::memory_order_release);
  return true;
}

std::string_view isa_name(Isa isa) noexcept {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

}  // namespace segref::simd
