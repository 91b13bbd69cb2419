#include "segref/core/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "segref/core/kernels.hpp"

namespace segref {

EmbeddingMatrix EmbeddingMatrix::from_normalized(std::size_t rows, std::size_t dim,
                                                 std::vector<float> data) {
  EmbeddingMatrix m(rows, dim, std::move(data));
  m.require_normalized();
  return m;
}

void EmbeddingMatrix::require_normalized() {
  for (std::size_t i = 0; i < rows(); ++i) {
    const auto r = row(i);
    const double norm = std::sqrt(dot(r, r));
    if (!(std::abs(norm - 1.0) <= kNormTolerance)) {
      fail(ErrorCode::kNotNormalized,
           "row " + std::to_string(i) + " has norm " + std::to_string(norm));
    }
  }
  normalized_ = true;
}

EmbeddingMatrix EmbeddingMatrix::select_rows(std::span<const std::size_t> indices) const {
  std::vector<float> data;
  data.reserve(indices.size() * dim());
  for (std::size_t idx : indices) {
    if (idx >= rows()) fail(ErrorCode::kInvalidArgument, "row index out of range");
    const auto r = row(idx);
    data.insert(data.end(), r.begin(), r.end());
  }
  EmbeddingMatrix out(indices.size(), dim(), std::move(data));
  out.normalized_ = normalized_;
  return out;
}

EmbeddingMatrix stack_rows(std::span<const std::vector<float>> rows, std::size_t dim) {
  std::vector<float> data;
  data.reserve(rows.size() * dim);
  for (const auto& r : rows) {
    if (r.size() != dim) fail(ErrorCode::kDimMismatch, "row length differs from dim");
    data.insert(data.end(), r.begin(), r.end());
  }
  return EmbeddingMatrix(rows.size(), dim, std::move(data));
}

}  // namespace segref
