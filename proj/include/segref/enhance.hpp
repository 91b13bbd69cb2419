#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "segref/core/kernels.hpp"
#include "segref/pairing.hpp"

namespace segref {

/// Pairs sharing one root noun, with their visual center.
struct LabelGroup {
  std::string root;
  std::vector<std::size_t> members;  // indices into the pair list, ascending
  std::vector<float> center;         // unit norm
  std::vector<float> intra_scores;   // cosine(member segment, center)
};

enum class FilterKind {
  kGlobalCrossModal,         // (a) lowest cross-modal scores over the whole set
  kGroupCrossModal,          // (b) lowest cross-modal scores within each group
  kGroupIntraModal,          // (c) lowest similarity to the group center
  kGroupIntraModalWeighted,  // (d) like (c), ratio scaled by group dispersion
};

std::string_view filter_kind_name(FilterKind k) noexcept;
FilterKind parse_filter_kind(std::string_view name);

struct FilterStrategy {
  FilterKind kind = FilterKind::kGroupIntraModal;
  double delta_filter = 30.0;  // percent, [0, 100]
};

/// Dataset-wide drop rule for strategy (a): the `count` pairs with the lowest
/// (score, index) are dropped.
struct GlobalCutoff {
  std::size_t count = 0;
  float score = 0.0f;
  std::size_t index = 0;
  bool drops_all = false;

  bool drops(float s, std::size_t i) const noexcept {
    if (drops_all) return true;
    if (count == 0) return false;
    return s < score || (s == score && i < index);
  }
};

GlobalCutoff global_cross_modal_cutoff(std::span<const PairRecord> pairs, double delta_filter);

struct FilterResult {
  std::vector<std::size_t> kept;
  std::vector<std::size_t> dropped;
};

struct SynonymTable {
  std::vector<std::pair<std::string, std::string>> pairs;  // first < second
  std::size_t k_sim = 0;

  std::vector<std::string> synonyms_of(const std::string& root) const;
};

/// Groups pairs by root (groups ordered by root). segment_rows[i] is the row
/// of `segments` holding pair i's visual embedding.
std::vector<LabelGroup> group_by_root(std::span<const PairRecord> pairs,
                                      std::span<const std::size_t> segment_rows,
                                      const EmbeddingMatrix& segments,
                                      CenterStrategy center = CenterStrategy::kCoordinateMedian);

/// Knee of a descending curve y over rank 0..n-1: the point farthest from
/// the chord joining the endpoints. nullopt when every distance <= 1e-12.
using KneeDetector = std::function<std::optional<std::size_t>(std::span<const double>)>;
std::optional<std::size_t> chord_distance_knee(std::span<const double> ys);

struct PruneResult {
  std::vector<LabelGroup> kept;
  std::vector<std::string> dropped_roots;  // largest group first
  std::optional<std::size_t> knee_size;
};

/// Drops groups larger than the knee of the sorted (rank, log size) curve.
/// Throws TooFewGroups below three groups.
PruneResult prune_ambiguous_labels(std::vector<LabelGroup> groups,
                                   const KneeDetector& knee = chord_distance_knee);

/// Drop ratio in percent: delta_filter, or for (d) clamp(2 * delta * w, 0, 50)
/// with w the mean of (1 - intra score).
double group_drop_ratio(const LabelGroup& group, const FilterStrategy& strategy);

/// Splits a group into kept and dropped pair indices. Groups of one member
/// are never filtered by the group strategies. `global` is required for (a).
FilterResult filter_group(const LabelGroup& group, std::span<const PairRecord> pairs,
                          const FilterStrategy& strategy,
                          const std::optional<GlobalCutoff>& global = std::nullopt);

/// The k_sim most similar unordered root pairs; ties by lexicographic pair.
SynonymTable build_synonym_table(const EmbeddingMatrix& root_embeddings,
                                 std::span<const std::string> roots, std::size_t k_sim);

/// `phrase` with its root token replaced by `replacement`.
std::string substitute_root(std::string_view phrase, std::string_view replacement);

/// Adds a synonym-substituted copy of every originally paired phrase on the
/// same segment. Existing labels are kept and duplicates are skipped.
std::vector<PairRecord> enrich_labels(std::span<const PairRecord> pairs,
                                      const SynonymTable& table);

struct EnhanceConfig {
  FilterStrategy filter;
  std::size_t k_sim = 30;
  CenterStrategy center = CenterStrategy::kCoordinateMedian;
  bool prune_ambiguous = true;
  bool apply_filter = true;
  bool apply_enrich = true;
};

struct EnhanceReport {
  std::size_t input_pairs = 0;
  std::size_t input_groups = 0;
  bool prune_skipped = false;
  std::vector<std::string> ambiguous_roots;
  std::size_t ambiguous_pairs_dropped = 0;
  std::size_t filtered_pairs_dropped = 0;
  std::vector<std::pair<std::string, std::string>> synonym_pairs;
  std::size_t enriched_pairs_added = 0;
  std::size_t output_pairs = 0;
  std::size_t output_segments = 0;
  std::size_t output_labels = 0;
};

struct EnhanceResult {
  std::vector<PairRecord> pairs;
  EnhanceReport report;
};

/// Root text embeddings keyed by root, used to build the synonym table.
struct RootEmbeddings {
  std::vector<std::string> roots;
  EmbeddingMatrix embeddings;
};

/// Full enhancement: ambiguous-label pruning, group filtering, enrichment.
EnhanceResult enhance_pairs(std::span<const PairRecord> pairs,
                            std::span<const std::size_t> segment_rows,
                            const EmbeddingMatrix& segments,
                            const RootEmbeddings& root_embeddings,
                            const EnhanceConfig& config);

}  // namespace segref
