#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "segref/core/matrix.hpp"

namespace segref {

/// One image's class-agnostic segments and description phrases, both
/// embedded in the shared pairing space.
struct ImageBundle {
  std::string image_id;
  EmbeddingMatrix segment_embeddings;  // m x d
  std::vector<std::string> phrases;    // n
  EmbeddingMatrix phrase_embeddings;   // n x d
};

enum class LabelSource { kPaired, kSynonym };

std::string_view label_source_name(LabelSource s) noexcept;
LabelSource parse_label_source(std::string_view name);

struct PairRecord {
  std::string image_id;
  std::size_t segment_index = 0;
  std::string phrase;
  std::string root;
  float cross_modal_score = 0.0f;
  LabelSource source = LabelSource::kPaired;

  bool operator==(const PairRecord&) const = default;
};

/// Heuristic noun-phrase chunker: lowercased, ordered, deduplicated chunks of
/// an optional determiner followed by content words, split at function
/// words, common verbs and punctuation.
std::vector<std::string> extract_noun_phrases(std::string_view description);

/// Lowercased head noun: last alphabetic token, de-pluralized by rule.
/// Throws NoRoot when the phrase has no alphabetic token.
std::string root_of_phrase(std::string_view phrase);

/// Position [begin, end) of the token root_of_phrase derives the root from.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};
TokenSpan root_token_span(std::string_view phrase);

/// Pairs each phrase with its most similar segment (ties: lowest segment
/// index). One record per phrase; segments chosen by no phrase are dropped.
std::vector<PairRecord> pair_labels_to_segments(const ImageBundle& bundle);

}  // namespace segref
