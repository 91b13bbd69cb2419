#include "segref/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>

#include "segref/core/parallel.hpp"
#include "segref/core/simd.hpp"

namespace segref {

SparseAssignment SparseAssignment::from_sorted(
    std::size_t rows, std::size_t cols,
    std::span<const std::pair<std::uint64_t, std::uint64_t>> entries) {
  if (cols > std::numeric_limits<std::uint32_t>::max()) {
    fail(ErrorCode::kMalformed, "too many label columns");
  }
  SparseAssignment s;
  s.rows_ = rows;
  s.cols_ = cols;
  s.row_begin_.assign(rows + 1, 0);
  s.col_index_.reserve(entries.size());
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const auto [r, c] = entries[e];
    if (r >= rows || c >= cols) {
      fail(ErrorCode::kMalformed, "assignment (" + std::to_string(r) + ", " +
                                      std::to_string(c) + ") outside " +
                                      std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (e > 0 && !(entries[e - 1] < entries[e])) {
      fail(ErrorCode::kMalformed, "assignments are not strictly increasing at entry " +
                                      std::to_string(e));
    }
    s.row_begin_[r + 1]++;
    s.col_index_.push_back(static_cast<std::uint32_t>(c));
  }
  for (std::size_t r = 0; r < rows; ++r) s.row_begin_[r + 1] += s.row_begin_[r];
  return s;
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> SparseAssignment::entries() const {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
  out.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::uint32_t c : row(r)) out.emplace_back(r, c);
  }
  return out;
}

ReferenceSet ReferenceSet::create(EmbeddingMatrix segments, EmbeddingMatrix labels,
                                  SparseAssignment assignments,
                                  std::vector<LabelMeta> label_meta,
                                  EncoderFingerprints fingerprints) {
  if (assignments.rows() != segments.rows() || assignments.cols() != labels.rows()) {
    fail(ErrorCode::kShapeMismatch, "O_ref shape does not match S_ref / L_ref rows");
  }
  if (label_meta.size() != labels.rows()) {
    fail(ErrorCode::kShapeMismatch, "label metadata count differs from label rows");
  }
  if (!segments.normalized()) segments.require_normalized();
  if (!labels.normalized()) labels.require_normalized();

  std::vector<bool> col_used(assignments.cols(), false);
  for (std::size_t r = 0; r < assignments.rows(); ++r) {
    const auto cols = assignments.row(r);
    if (cols.empty()) {
      fail(ErrorCode::kOrphanSegment, "reference segment " + std::to_string(r) + " has no label");
    }
    for (std::uint32_t c : cols) col_used[c] = true;
  }
  for (std::size_t c = 0; c < col_used.size(); ++c) {
    if (!col_used[c]) {
      fail(ErrorCode::kOrphanLabel, "label " + std::to_string(c) + " labels no segment");
    }
  }

  ReferenceSet ref;
  ref.segments_ = std::move(segments);
  ref.labels_ = std::move(labels);
  ref.assignments_ = std::move(assignments);
  ref.label_meta_ = std::move(label_meta);
  ref.fingerprints_ = std::move(fingerprints);
  return ref;
}

ReferenceSet build_reference_set(std::span<const PairRecord> pairs,
                                 std::span<const std::size_t> segment_rows,
                                 const EmbeddingMatrix& segments,
                                 const LabelEmbeddingTable& label_embeddings,
                                 EncoderFingerprints fingerprints) {
  if (segment_rows.size() != pairs.size()) {
    fail(ErrorCode::kShapeMismatch, "segment_rows length differs from pair count");
  }
  if (pairs.empty()) fail(ErrorCode::kEmptyInput, "no pairs to build a reference set from");
  if (label_embeddings.phrases.size() != label_embeddings.embeddings.rows()) {
    fail(ErrorCode::kShapeMismatch, "label table phrases and rows differ");
  }

  std::unordered_map<std::string, std::size_t> phrase_lookup;
  for (std::size_t i = 0; i < label_embeddings.phrases.size(); ++i) {
    phrase_lookup.emplace(label_embeddings.phrases[i], i);
  }

  std::unordered_map<std::size_t, std::size_t> seg_index;   // source row -> ref row
  std::unordered_map<std::string, std::size_t> label_index;  // phrase -> column
  std::vector<std::size_t> seg_source_rows;
  std::vector<std::size_t> label_source_rows;
  std::vector<LabelMeta> meta;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> entries;
  entries.reserve(pairs.size());

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const PairRecord& p = pairs[i];
    const auto [sit, seg_new] = seg_index.emplace(segment_rows[i], seg_source_rows.size());
    if (seg_new) seg_source_rows.push_back(segment_rows[i]);

    auto lit = label_index.find(p.phrase);
    if (lit == label_index.end()) {
      const auto emb = phrase_lookup.find(p.phrase);
      if (emb == phrase_lookup.end()) {
        fail(ErrorCode::kMissingEmbedding, "no label embedding for phrase '" + p.phrase + "'");
      }
      lit = label_index.emplace(p.phrase, meta.size()).first;
      label_source_rows.push_back(emb->second);
      meta.push_back(LabelMeta{meta.size(), p.phrase, p.root, p.source});
    } else if (p.source == LabelSource::kPaired) {
      meta[lit->second].source = LabelSource::kPaired;
    }
    entries.emplace_back(sit->second, lit->second);
  }
  std::sort(entries.begin(), entries.end());
  entries.erase(std::unique(entries.begin(), entries.end()), entries.end());

  EmbeddingMatrix s_ref = segments.select_rows(seg_source_rows);
  EmbeddingMatrix l_ref = label_embeddings.embeddings.select_rows(label_source_rows);
  SparseAssignment o_ref =
      SparseAssignment::from_sorted(seg_source_rows.size(), meta.size(), entries);
  return ReferenceSet::create(std::move(s_ref), std::move(l_ref), std::move(o_ref),
                              std::move(meta), std::move(fingerprints));
}

std::array<std::string, kPromptTemplateCount> compose_prompts(std::string_view class_name) {
  if (class_name.empty()) fail(ErrorCode::kInvalidArgument, "empty class name");
  const std::string name(class_name);
  return {"A photo of " + name + ",", "This is a photo of " + name + ",",
          "There is " + name + " in the scene,", "A photo of " + name + " in the scene."};
}

std::vector<float> average_template_embeddings(const EmbeddingMatrix& per_template) {
  if (per_template.rows() == 0) fail(ErrorCode::kEmptyInput, "no template embeddings");
  std::vector<double> acc(per_template.dim(), 0.0);
  const auto& k = simd::active();
  for (std::size_t p = 0; p < per_template.rows(); ++p) {
    k.axpy(acc.data(), 1.0, per_template.row(p).data(), acc.size());
  }
  std::vector<float> mean(acc.size());
  const double inv = 1.0 / static_cast<double>(per_template.rows());
  for (std::size_t j = 0; j < acc.size(); ++j) mean[j] = static_cast<float>(acc[j] * inv);
  normalize_in_place(mean, ErrorCode::kZeroMean);
  return mean;
}

Matrix affinity_a1(const EmbeddingMatrix& test_segments, const ReferenceSet& ref,
                   const RetrievalConfig& cfg) {
  if (test_segments.dim() != ref.segments().dim()) {
    fail(ErrorCode::kDimMismatch, "test segment dim " + std::to_string(test_segments.dim()) +
                                      " vs reference dim " +
                                      std::to_string(ref.segments().dim()));
  }
  SimilarityMatrix logits = cosine_sim(test_segments, ref.segments());
  const std::size_t m = ref.segment_count();
  if (cfg.top_k_candidates) {
    const std::size_t top_k = *cfg.top_k_candidates;
    if (top_k == 0 || top_k > m) {
      fail(ErrorCode::kInvalidArgument,
           "top_k_candidates must lie in [1, " + std::to_string(m) + "]");
    }
    if (top_k < m) {
      std::vector<std::size_t> order(m);
      for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto row = logits.row(i);
        for (std::size_t r = 0; r < m; ++r) order[r] = r;
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top_k),
                         order.end(), [&](std::size_t x, std::size_t y) {
                           if (row[x] != row[y]) return row[x] > row[y];
                           return x < y;
                         });
        for (std::size_t r = top_k; r < m; ++r) {
          row[order[r]] = -std::numeric_limits<float>::infinity();
        }
      }
    }
  }
  const SimilarityMatrix probs = softmax_rows(logits, cfg.temperature_a1);

  const SparseAssignment& o_ref = ref.assignments();
  Matrix a1(probs.rows(), o_ref.cols());
  const auto& k = simd::active();
  parallel::for_each_chunk(probs.rows(), 4, [&](std::size_t i0, std::size_t i1) {
    std::vector<double> acc(o_ref.cols());
    for (std::size_t i = i0; i < i1; ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const auto p = probs.row(i);
      for (std::size_t r = 0; r < m; ++r) {
        if (p[r] == 0.0f) continue;
        for (std::uint32_t c : o_ref.row(r)) acc[c] += p[r];
      }
      k.narrow(a1.row(i).data(), acc.data(), acc.size());
    }
  });
  return a1;
}

Matrix affinity_a2(const ReferenceSet& ref, const EmbeddingMatrix& test_classes,
                   const RetrievalConfig& cfg) {
  if (test_classes.dim() != ref.labels().dim()) {
    fail(ErrorCode::kDimMismatch, "test class dim " + std::to_string(test_classes.dim()) +
                                      " vs reference label dim " +
                                      std::to_string(ref.labels().dim()));
  }
  if (test_classes.rows() == 0) fail(ErrorCode::kEmptyInput, "no test classes");
  return softmax_rows(cosine_sim(ref.labels(), test_classes), cfg.temperature_a2);
}

Matrix segment_logits(const Matrix& a1, const Matrix& a2) { return matmul(a1, a2); }

LabelRaster PredictionMap::label_raster() const {
  return LabelRaster{height, width, classes, labels};
}

PredictionMap aggregate_pixels(const Matrix& segment_probs, const SegmentMaskSet& masks) {
  if (segment_probs.rows() != masks.size()) {
    fail(ErrorCode::kShapeMismatch, "P_seg has " + std::to_string(segment_probs.rows()) +
                                        " rows but there are " +
                                        std::to_string(masks.size()) + " masks");
  }
  const std::size_t c = segment_probs.cols();
  const std::size_t pixels = masks.pixels();
  PredictionMap out;
  out.height = masks.height();
  out.width = masks.width();
  out.classes = c;
  out.probabilities.assign(pixels * c, 0.0f);
  out.labels.assign(pixels, kIgnoreLabel);
  out.uncovered.assign(pixels, 0);

  const auto& k = simd::active();
  parallel::for_each_chunk(pixels, 4096, [&](std::size_t p0, std::size_t p1) {
    std::vector<double> acc(c);
    for (std::size_t p = p0; p < p1; ++p) {
      std::fill(acc.begin(), acc.end(), 0.0);
      bool covered = false;
      if (masks.form() == SegmentMaskSet::Form::kPartition) {
        k.axpy(acc.data(), 1.0, segment_probs.row(masks.ids()[p]).data(), c);
        covered = true;
      } else {
        for (std::size_t i = 0; i < masks.size(); ++i) {
          if (!masks.covers(i, p)) continue;
          k.axpy(acc.data(), 1.0, segment_probs.row(i).data(), c);
          covered = true;
        }
      }
      float* dst = out.probabilities.data() + p * c;
      k.narrow(dst, acc.data(), c);
      if (!covered || c == 0) {
        out.uncovered[p] = covered ? 0 : 1;
        continue;
      }
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j) {
        if (dst[j] > dst[best]) best = j;
      }
      out.labels[p] = static_cast<std::uint32_t>(best);
    }
  });
  return out;
}

PredictionMap retrieve(const ReferenceSet& ref, const EmbeddingMatrix& test_segments,
                       const EmbeddingMatrix& test_classes, const SegmentMaskSet& masks,
                       const RetrievalConfig& cfg) {
  const Matrix a1 = affinity_a1(test_segments, ref, cfg);
  const Matrix a2 = affinity_a2(ref, test_classes, cfg);
  return aggregate_pixels(segment_logits(a1, a2), masks);
}

}  // namespace segref
