#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "segref/error.hpp"

namespace segref {

/// Dense row-major float32 matrix. Used for similarity scores, affinities,
/// and logits; embeddings wrap it in EmbeddingMatrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      fail(ErrorCode::kShapeMismatch, "matrix data length does not match rows*cols");
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> row(std::size_t i) noexcept {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<const float> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  float& operator()(std::size_t i, std::size_t j) noexcept {
    return data_[i * cols_ + j];
  }
  float operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * cols_ + j];
  }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

using SimilarityMatrix = Matrix;

/// Row-major feature vectors. The normalized flag is only ever set by code
/// that has verified (or enforced) unit row norms.
class EmbeddingMatrix {
 public:
  static constexpr double kNormTolerance = 1e-5;

  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t dim)
      : values_(rows, dim) {}
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data)
      : values_(rows, dim, std::move(data)) {}

  /// Wraps data whose rows are already unit-norm; throws NotNormalized
  /// when any row is off by more than kNormTolerance.
  static EmbeddingMatrix from_normalized(std::size_t rows, std::size_t dim,
                                         std::vector<float> data);

  std::size_t rows() const noexcept { return values_.rows(); }
  std::size_t dim() const noexcept { return values_.cols(); }
  bool normalized() const noexcept { return normalized_; }

  std::span<const float> row(std::size_t i) const noexcept { return values_.row(i); }
  std::span<float> mutable_row(std::size_t i) noexcept {
    normalized_ = false;
    return values_.row(i);
  }
  std::span<const float> values() const noexcept { return values_.values(); }
  const Matrix& matrix() const noexcept { return values_; }

  /// Verifies every row norm and sets the flag; throws NotNormalized.
  void require_normalized();

  /// Copies the listed rows into a new matrix, preserving the flag.
  EmbeddingMatrix select_rows(std::span<const std::size_t> indices) const;

  bool operator==(const EmbeddingMatrix& other) const {
    return values_ == other.values_;
  }

 private:
  friend EmbeddingMatrix l2_normalize(const EmbeddingMatrix&);

  Matrix values_;
  bool normalized_ = false;
};

/// Stacks rows (all of length dim) into an unnormalized matrix.
EmbeddingMatrix stack_rows(std::span<const std::vector<float>> rows, std::size_t dim);

}  // namespace segref
