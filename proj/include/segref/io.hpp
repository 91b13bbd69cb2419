#pragma once

// Binary formats (all little-endian, 4-byte magic then u32 version = 1):
//
//   EMB1  u32 dtype (0 = float32), u64 rows, u64 dim, rows*dim float32
//   FMP1  u64 grid_h, u64 grid_w, u64 dim, grid_h*grid_w*dim float32
//   MSK1  u64 h, u64 w, u64 k, h*w u32 ids (< k, or 0xFFFFFFFF = ignore)
//   MSKS  u64 h, u64 w, u64 k, then per mask: u32 run count followed by
//         that many u32 run lengths alternating 0/1, starting with 0
//   ASG1  u64 m, u64 n, u64 nnz, nnz x (u64 row, u64 col), strictly
//         increasing in row-major order
//
// Readers validate everything and throw segref::Error; a file whose length
// differs from what its header promises is Truncated.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "segref/core/matrix.hpp"
#include "segref/enhance.hpp"
#include "segref/masks.hpp"
#include "segref/pairing.hpp"
#include "segref/pooling.hpp"
#include "segref/retrieval.hpp"
#include "segref/segmenter.hpp"

namespace segref::io {

namespace fs = std::filesystem;
using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint32_t kFormatVersion = 1;

enum class FileKind { kEmbeddings, kFeatureMap, kLabelRaster, kMaskStack, kAssignments };

/// Kind from the 4-byte magic; throws BadMagic.
FileKind sniff(std::span<const std::uint8_t> bytes);

Bytes read_file(const fs::path& path);
/// Writes via a temporary file and rename.
void write_file(const fs::path& path, std::span<const std::uint8_t> bytes);

Bytes encode_embeddings(const EmbeddingMatrix& m);
EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes);
void write_embeddings(const fs::path& path, const EmbeddingMatrix& m);
EmbeddingMatrix read_embeddings(const fs::path& path);

Bytes encode_feature_map(const FeatureMap& f);
FeatureMap decode_feature_map(std::span<const std::uint8_t> bytes);
void write_feature_map(const fs::path& path, const FeatureMap& f);
FeatureMap read_feature_map(const fs::path& path);

Bytes encode_label_raster(const LabelRaster& r);
LabelRaster decode_label_raster(std::span<const std::uint8_t> bytes);
void write_label_raster(const fs::path& path, const LabelRaster& r);
LabelRaster read_label_raster(const fs::path& path);

Bytes encode_mask_stack(const SegmentMaskSet& masks);
SegmentMaskSet decode_mask_stack(std::span<const std::uint8_t> bytes);

/// MSK1 for partition-form sets, MSKS for stacks.
Bytes encode_masks(const SegmentMaskSet& masks);
/// Accepts MSK1 (partition; every id in [0, k) must occur) or MSKS.
SegmentMaskSet decode_masks(std::span<const std::uint8_t> bytes);
void write_masks(const fs::path& path, const SegmentMaskSet& masks);
SegmentMaskSet read_masks(const fs::path& path);

Bytes encode_assignments(const SparseAssignment& a);
SparseAssignment decode_assignments(std::span<const std::uint8_t> bytes);
void write_assignments(const fs::path& path, const SparseAssignment& a);
SparseAssignment read_assignments(const fs::path& path);

// ---- line-delimited records -------------------------------------------

std::vector<nlohmann::json> read_jsonl(const fs::path& path);
void write_jsonl(const fs::path& path, std::span<const nlohmann::json> records);
nlohmann::json read_json(const fs::path& path);
void write_json(const fs::path& path, const nlohmann::json& value);

nlohmann::json pair_to_json(const PairRecord& p);
PairRecord pair_from_json(const nlohmann::json& j);
std::vector<PairRecord> read_pairs(const fs::path& path);
void write_pairs(const fs::path& path, std::span<const PairRecord> pairs);

/// Text strings with their embeddings: <base>.jsonl holds one record per
/// text ({"text": ..., optional "prompts": [...]}) and <base>.emb holds
/// rows_per_text consecutive rows for each record.
struct TextTable {
  std::vector<std::string> texts;
  std::vector<std::vector<std::string>> prompts;  // empty when not templated
  std::size_t rows_per_text = 1;
  EmbeddingMatrix embeddings;
};
TextTable read_text_table(const fs::path& base);
void write_text_table(const fs::path& base, const TextTable& table);

/// Template-averaged label embeddings. Every record must carry exactly the
/// prompts compose_prompts() produces for its text.
LabelEmbeddingTable read_label_table(const fs::path& base);

RootEmbeddings read_root_table(const fs::path& base);

// ---- reference set directory ------------------------------------------

/// segments.emb, labels.emb, assignments.asg, labels.jsonl, manifest.json.
/// `enhancement` is stored verbatim under the manifest's "enhancement" key.
void save_reference_set(const fs::path& dir, const ReferenceSet& ref,
                        const nlohmann::json& enhancement = nlohmann::json::object());

struct LoadedReferenceSet {
  ReferenceSet ref;
  nlohmann::json manifest;
};
LoadedReferenceSet load_reference_set(const fs::path& dir);

// ---- images -----------------------------------------------------------

/// PNG (via libpng) or binary PPM/PGM (P6/P5, maxval 255).
ImageRaster read_image(const fs::path& path);
void write_png(const fs::path& path, const ImageRaster& img);
void write_ppm(const fs::path& path, const ImageRaster& img);

/// Deterministic color per id; ignore pixels are black.
ImageRaster colorize(const LabelRaster& labels);

}  // namespace segref::io
