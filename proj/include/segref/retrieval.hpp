#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "segref/core/kernels.hpp"
#include "segref/masks.hpp"
#include "segref/pairing.hpp"

namespace segref {

/// Binary m x n segment-label assignment in CSR form.
class SparseAssignment {
 public:
  SparseAssignment() = default;

  /// entries must be strictly increasing in (row, col) order with row < rows
  /// and col < cols; throws Malformed otherwise.
  static SparseAssignment from_sorted(std::size_t rows, std::size_t cols,
                                      std::span<const std::pair<std::uint64_t, std::uint64_t>> entries);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return col_index_.size(); }

  /// Label columns set in segment row i, ascending.
  std::span<const std::uint32_t> row(std::size_t i) const noexcept {
    return {col_index_.data() + row_begin_[i], row_begin_[i + 1] - row_begin_[i]};
  }

  std::vector<std::pair<std::uint64_t, std::uint64_t>> entries() const;

  bool operator==(const SparseAssignment&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_begin_{0};
  std::vector<std::uint32_t> col_index_;
};

struct LabelMeta {
  std::size_t id = 0;
  std::string phrase;
  std::string root;
  LabelSource source = LabelSource::kPaired;

  bool operator==(const LabelMeta&) const = default;
};

struct EncoderFingerprints {
  std::string visual;
  std::string text;

  bool operator==(const EncoderFingerprints&) const = default;
};

/// {S_ref, O_ref, L_ref} plus label metadata. Immutable once created.
class ReferenceSet {
 public:
  /// Validates shapes, normalization, and that every assignment row and
  /// column is nonempty (OrphanSegment / OrphanLabel).
  static ReferenceSet create(EmbeddingMatrix segments, EmbeddingMatrix labels,
                             SparseAssignment assignments, std::vector<LabelMeta> label_meta,
                             EncoderFingerprints fingerprints);

  const EmbeddingMatrix& segments() const noexcept { return segments_; }
  const EmbeddingMatrix& labels() const noexcept { return labels_; }
  const SparseAssignment& assignments() const noexcept { return assignments_; }
  const std::vector<LabelMeta>& label_meta() const noexcept { return label_meta_; }
  const EncoderFingerprints& fingerprints() const noexcept { return fingerprints_; }

  std::size_t segment_count() const noexcept { return segments_.rows(); }
  std::size_t label_count() const noexcept { return labels_.rows(); }

 private:
  ReferenceSet() = default;

  EmbeddingMatrix segments_;
  EmbeddingMatrix labels_;
  SparseAssignment assignments_;
  std::vector<LabelMeta> label_meta_;
  EncoderFingerprints fingerprints_;
};

/// Phrase text embeddings looked up by exact phrase string.
struct LabelEmbeddingTable {
  std::vector<std::string> phrases;
  EmbeddingMatrix embeddings;  // one row per phrase, already template-averaged
};

/// Unique segments (first appearance order) become S_ref rows and unique
/// phrases become L_ref columns. segment_rows[i] indexes pair i's row in
/// `segments`.
ReferenceSet build_reference_set(std::span<const PairRecord> pairs,
                                 std::span<const std::size_t> segment_rows,
                                 const EmbeddingMatrix& segments,
                                 const LabelEmbeddingTable& label_embeddings,
                                 EncoderFingerprints fingerprints);

inline constexpr std::size_t kPromptTemplateCount = 4;

/// The four text prompts a label is embedded with.
std::array<std::string, kPromptTemplateCount> compose_prompts(std::string_view class_name);

/// Mean of the per-template rows, L2-renormalized. Throws ZeroMean.
std::vector<float> average_template_embeddings(const EmbeddingMatrix& per_template);

struct RetrievalConfig {
  double temperature_a1 = 1.0;
  double temperature_a2 = 1.0;
  std::optional<std::size_t> top_k_candidates;
};

/// Softmax over reference segments of S_test . S_ref^T (optionally keeping
/// only each row's top-k logits), times O_ref. k x n.
Matrix affinity_a1(const EmbeddingMatrix& test_segments, const ReferenceSet& ref,
                   const RetrievalConfig& cfg);

/// Softmax over test classes of L_ref . L_test^T. n x c.
Matrix affinity_a2(const ReferenceSet& ref, const EmbeddingMatrix& test_classes,
                   const RetrievalConfig& cfg);

/// A1 . A2 (k x c), double accumulation.
Matrix segment_logits(const Matrix& a1, const Matrix& a2);

struct PredictionMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t classes = 0;
  std::vector<float> probabilities;      // (y * width + x) * classes + j
  std::vector<std::uint32_t> labels;     // kIgnoreLabel where uncovered
  std::vector<std::uint8_t> uncovered;   // 1 where no mask covers the pixel

  LabelRaster label_raster() const;
};

/// Per pixel: the sum of P_seg rows of all masks covering it, then argmax
/// (ties to the lowest class).
PredictionMap aggregate_pixels(const Matrix& segment_probs, const SegmentMaskSet& masks);

/// affinity_a1 -> affinity_a2 -> segment_logits -> aggregate_pixels.
PredictionMap retrieve(const ReferenceSet& ref, const EmbeddingMatrix& test_segments,
                       const EmbeddingMatrix& test_classes, const SegmentMaskSet& masks,
                       const RetrievalConfig& cfg);

}  // namespace segref
