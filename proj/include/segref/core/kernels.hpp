#pragma once

#include <span>
#include <vector>

#include "segref/core/matrix.hpp"

namespace segref {

/// Rows divided by their Euclidean norm. Throws ZeroRow for any row with
/// norm <= 1e-12.
EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m);

/// Normalizes a single vector in place; throws `code` if its norm is
/// <= 1e-12.
void normalize_in_place(std::span<float> v, ErrorCode code);

/// result(i, j) = <a_i, b_j>. Both inputs must be normalized.
///
/// Computed in tiles of a-rows x b-rows; every entry is one dispatched dot
/// product, so the value of an entry never depends on tiling or threads.
SimilarityMatrix cosine_sim(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

/// Row-wise softmax of values / temperature with max subtraction,
/// exponentials and sums in double. Entries equal to -infinity are treated
/// as masked out and yield 0.
SimilarityMatrix softmax_rows(const SimilarityMatrix& s, double temperature = 1.0);

/// Dense a * b, accumulated in double.
Matrix matmul(const Matrix& a, const Matrix& b);

enum class CenterStrategy {
  kCoordinateMedian,  // per-dimension median, then L2-renormalized
  kMedoid,            // member with the highest summed cosine to the others
};

/// Per-dimension median (mean of the two middle values for even counts),
/// L2-renormalized. Throws EmptyInput / ZeroMedian.
std::vector<float> coordinatewise_median(const EmbeddingMatrix& rows);

/// Row of `rows` maximizing the summed cosine to all rows; ties go to the
/// lowest index. Input must be normalized.
std::vector<float> medoid(const EmbeddingMatrix& rows);

std::vector<float> group_center(const EmbeddingMatrix& rows, CenterStrategy strategy);

/// Double-accumulated dot product via the active kernel table.
double dot(std::span<const float> a, std::span<const float> b);

}  // namespace segref
