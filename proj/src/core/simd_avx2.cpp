#include "segref/core/simd.hpp"

#if defined(SEGREF_HAVE_AVX2) && (defined(__x86_64__) || defined(_M_X64))

#include <immintrin.h>

namespace segref::simd {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
}

double dot_avx2(const float* a, const float* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 va = _mm256_loadu_ps(a + i);
    const __m256 vb = _mm256_loadu_ps(b + i);
    const __m256d alo = _mm256_cvtps_pd(_mm256_castps256_ps128(va));
    const __m256d ahi = _mm256_cvtps_pd(_mm256_extractf128_ps(va, 1));
    const __m256d blo = _mm256_cvtps_pd(_mm256_castps256_ps128(vb));
    const __m256d bhi = _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1));
    acc0 = _mm256_fmadd_pd(alo, blo, acc0);
    acc1 = _mm256_fmadd_pd(ahi, bhi, acc1);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

// No FMA here: a separate multiply and add rounds exactly like the scalar
// reference, which keeps axpy bit-identical across ISAs.
void axpy_avx2(double* y, double alpha, const float* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    const __m256d vy = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(va, vx)));
  }
  for (; i < n; ++i) {
    const double prod = alpha * static_cast<double>(x[i]);
    y[i] = y[i] + prod;
  }
}

void narrow_avx2(float* out, const double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm_storeu_ps(out + i, _mm256_cvtpd_ps(_mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) out[i] = static_cast<float>(x[i]);
}

constexpr KernelTable kAvx2{Isa::kAvx2, &dot_avx2, &axpy_avx2, &narrow_avx2};

}  // namespace

namespace detail {
const KernelTable* avx2_table() noexcept {
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &kAvx2 : nullptr;
}
}  // namespace detail

}  // namespace segref::simd

#else

namespace segref::simd::detail {
const KernelTable* avx2_table() noexcept { return nullptr; }
}  // namespace segref::simd::detail

#endif
