#include "segref/core/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "segref/core/parallel.hpp"
#include "segref/core/simd.hpp"

namespace segref {

namespace {

constexpr double kMinNorm = 1e-12;
constexpr std::size_t kTileA = 32;
constexpr std::size_t kTileB = 256;

void require_unit_rows(const EmbeddingMatrix& m, const char* what) {
  if (!m.normalized()) {
    fail(ErrorCode::kNotNormalized, std::string(what) + " is not normalized");
  }
}

}  // namespace

double dot(std::span<const float> a, std::span<const float> b) {
  return simd::active().dot(a.data(), b.data(), std::min(a.size(), b.size()));
}

void normalize_in_place(std::span<float> v, ErrorCode code) {
  const double norm = std::sqrt(dot(v, v));
  if (!(norm > kMinNorm)) fail(code, "vector norm " + std::to_string(norm) + " <= 1e-12");
  for (float& x : v) x = static_cast<float>(x / norm);
}

EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m) {
  EmbeddingMatrix out(m.rows(), m.dim(),
                      std::vector<float>(m.values().begin(), m.values().end()));
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.values_.row(i);
    const double norm = std::sqrt(dot(r, r));
    if (!(norm > kMinNorm)) {
      fail(ErrorCode::kZeroRow, "row " + std::to_string(i) + " has zero norm");
    }
    for (float& x : r) x = static_cast<float>(x / norm);
  }
  out.normalized_ = true;
  return out;
}

SimilarityMatrix cosine_sim(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  if (a.dim() != b.dim()) {
    fail(ErrorCode::kDimMismatch, "cosine_sim: dims " + std::to_string(a.dim()) +
                                      " vs " + std::to_string(b.dim()));
  }
  require_unit_rows(a, "cosine_sim lhs");
  require_unit_rows(b, "cosine_sim rhs");

  SimilarityMatrix out(a.rows(), b.rows());
  const auto& k = simd::active();
  const std::size_t d = a.dim();
  parallel::for_each_chunk(a.rows(), kTileA, [&](std::size_t i0, std::size_t i1) {
    for (std::size_t j0 = 0; j0 < b.rows(); j0 += kTileB) {
      const std::size_t j1 = std::min(b.rows(), j0 + kTileB);
      for (std::size_t i = i0; i < i1; ++i) {
        const float* ai = a.row(i).data();
        float* dst = out.row(i).data();
        for (std::size_t j = j0; j < j1; ++j) {
          dst[j] = static_cast<float>(k.dot(ai, b.row(j).data(), d));
        }
      }
    }
  });
  return out;
}

SimilarityMatrix softmax_rows(const SimilarityMatrix& s, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    fail(ErrorCode::kNonPositiveTemperature,
         "temperature must be positive, got " + std::to_string(temperature));
  }
  SimilarityMatrix out(s.rows(), s.cols());
  const double inv_t = 1.0 / temperature;
  parallel::for_each_chunk(s.rows(), 64, [&](std::size_t r0, std::size_t r1) {
    std::vector<double> e(s.cols());
    for (std::size_t i = r0; i < r1; ++i) {
      const auto src = s.row(i);
      double mx = -std::numeric_limits<double>::infinity();
      for (float v : src) mx = std::max(mx, static_cast<double>(v));
      if (!std::isfinite(mx)) {
        fail(ErrorCode::kInvalidArgument,
             "softmax row " + std::to_string(i) + " has no finite entries");
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < src.size(); ++j) {
        const double v = static_cast<double>(src[j]);
        e[j] = v == -std::numeric_limits<double>::infinity() ? 0.0
                                                             : std::exp((v - mx) * inv_t);
        sum += e[j];
      }
      auto dst = out.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) {
        dst[j] = static_cast<float>(e[j] / sum);
      }
    }
  });
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorCode::kDimMismatch, "matmul inner dims " + std::to_string(a.cols()) +
                                      " vs " + std::to_string(b.rows()));
  }
  Matrix out(a.rows(), b.cols());
  const auto& k = simd::active();
  parallel::for_each_chunk(a.rows(), 16, [&](std::size_t r0, std::size_t r1) {
    std::vector<double> acc(b.cols());
    for (std::size_t i = r0; i < r1; ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const auto ai = a.row(i);
      for (std::size_t l = 0; l < a.cols(); ++l) {
        if (ai[l] == 0.0f) continue;
        k.axpy(acc.data(), ai[l], b.row(l).data(), b.cols());
      }
      k.narrow(out.row(i).data(), acc.data(), acc.size());
    }
  });
  return out;
}

std::vector<float> coordinatewise_median(const EmbeddingMatrix& rows) {
  if (rows.rows() == 0) fail(ErrorCode::kEmptyInput, "median of zero rows");
  const std::size_t n = rows.rows();
  std::vector<float> center(rows.dim());
  std::vector<float> column(n);
  for (std::size_t j = 0; j < rows.dim(); ++j) {
    for (std::size_t i = 0; i < n; ++i) column[i] = rows.row(i)[j];
    const std::size_t mid = n / 2;
    std::nth_element(column.begin(), column.begin() + mid, column.end());
    const double upper = column[mid];
    if (n % 2 == 1) {
      center[j] = static_cast<float>(upper);
    } else {
      const double lower = *std::max_element(column.begin(), column.begin() + mid);
      center[j] = static_cast<float>(0.5 * (lower + upper));
    }
  }
  normalize_in_place(center, ErrorCode::kZeroMedian);
  return center;
}

std::vector<float> medoid(const EmbeddingMatrix& rows) {
  if (rows.rows() == 0) fail(ErrorCode::kEmptyInput, "medoid of zero rows");
  const SimilarityMatrix sim = cosine_sim(rows, rows);
  std::size_t best = 0;
  double best_total = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sim.rows(); ++i) {
    double total = 0.0;
    for (float v : sim.row(i)) total += v;
    if (total > best_total) {
      best_total = total;
      best = i;
    }
  }
  const auto r = rows.row(best);
  return {r.begin(), r.end()};
}

std::vector<float> group_center(const EmbeddingMatrix& rows, CenterStrategy strategy) {
  return strategy == CenterStrategy::kMedoid ? medoid(rows) : coordinatewise_median(rows);
}

}  // namespace segref
