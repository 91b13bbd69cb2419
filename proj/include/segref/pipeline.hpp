#pragma once

// File-based pipeline stages over ingest directories.
//
// Reference ingest directory:
//   index.jsonl                     {"image_id": ...} per image
//   manifest.json                   {"encoders": {"visual": ..., "text": ...}}
//   phrases.jsonl                   {"image_id", "phrases": [...]} (optional)
//   descriptions.jsonl              {"image_id", "description"} (used when
//                                   phrases.jsonl is absent)
//   masks/<id>.msk                  MSK1 or MSKS
//   features/<id>.fmp               dense visual features
//   embeddings/<id>.segments.emb    segment embeddings in the pairing space
//   embeddings/<id>.phrases.{jsonl,emb}  phrase embeddings, pairing space
//   embeddings/<id>.visual.emb      pooled visual embeddings (pool writes it)
//
// Test directories hold index.jsonl, manifest.json, images/, features/ and
// optionally gt/; segment writes masks/ and pool writes embeddings/.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "segref/enhance.hpp"
#include "segref/io.hpp"
#include "segref/retrieval.hpp"
#include "segref/segmenter.hpp"

namespace segref::pipeline {

namespace fs = std::filesystem;

std::vector<std::string> read_index(const fs::path& dir);

/// encoders from <dir>/manifest.json.
EncoderFingerprints read_fingerprints(const fs::path& dir);

/// Phrases per image: phrases.jsonl when present, otherwise extracted from
/// descriptions.jsonl. Images without an entry get no phrases.
std::vector<std::vector<std::string>> read_phrases(const fs::path& ingest,
                                                   std::span<const std::string> ids);

/// Pairs every image's phrases with its segments in the pairing space.
std::vector<PairRecord> pair_images(const fs::path& ingest);

/// images/<id>.{png,ppm,pgm} -> masks/<id>.msk.
void segment_images(const fs::path& dir, const FelzenszwalbParams& params);

/// masks/<id>.msk + features/<id>.fmp -> embeddings/<id>.visual.emb.
void pool_images(const fs::path& dir);

/// Visual embeddings of the segments the pairs refer to; rows[i] is pair
/// i's row and rows appear in first-reference order.
struct SegmentTable {
  EmbeddingMatrix embeddings;
  std::vector<std::size_t> rows;
};
SegmentTable gather_visual_segments(const fs::path& ingest, std::span<const PairRecord> pairs);

nlohmann::json settings_json(const EnhanceConfig& config);
nlohmann::json report_json(const EnhanceReport& report);

EnhanceResult enhance_images(const fs::path& ingest, std::span<const PairRecord> pairs,
                             const fs::path& roots_base, const EnhanceConfig& config);

/// Visual fingerprint from the ingest manifest, text fingerprint from the
/// manifest next to the label table.
ReferenceSet build_reference(const fs::path& ingest, std::span<const PairRecord> pairs,
                             const fs::path& labels_base);

struct RetrieveOptions {
  RetrievalConfig config;
  bool write_png = false;
  bool write_probabilities = false;
};

/// For each test image writes <out>/<id>.msk (class raster), and optionally
/// <id>.png and <id>.probs.fmp (h x w x classes). Throws FingerprintMismatch
/// when the test or class encoders differ from the reference set's.
void retrieve_images(const ReferenceSet& ref, const fs::path& test_dir,
                     const fs::path& classes_base, const fs::path& out,
                     const RetrieveOptions& options);

/// Accumulates one confusion matrix over all listed images.
nlohmann::json evaluate_images(const fs::path& pred_dir, const fs::path& gt_dir,
                               std::span<const std::string> ids,
                               std::span<const std::string> class_names);

}  // namespace segref::pipeline
