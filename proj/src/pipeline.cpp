#include "segref/pipeline.hpp"

#include <map>
#include <mutex>
#include <unordered_map>

#include "segref/core/parallel.hpp"
#include "segref/eval.hpp"
#include "segref/pooling.hpp"

namespace segref::pipeline {

using nlohmann::json;

namespace {

std::string field(const json& j, const char* key, const fs::path& where) {
  try {
    return j.at(key).get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kMalformed, where.string() + ": " + e.what());
  }
}

fs::path emb_path(const fs::path& dir, const std::string& id, const char* kind) {
  return dir / "embeddings" / (id + "." + kind + ".emb");
}

// Runs body(i) for each image; per-image errors name the image.
template <typename Body>
void for_each_image(std::span<const std::string> ids, Body&& body) {
  parallel::for_each_chunk(ids.size(), 1, [&](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      try {
        body(i);
      } catch (const Error& e) {
        throw Error(e.code(), "image " + ids[i] + ": " + e.message());
      }
    }
  });
}

}  // namespace

std::vector<std::string> read_index(const fs::path& dir) {
  const fs::path path = dir / "index.jsonl";
  std::vector<std::string> ids;
  for (const auto& r : io::read_jsonl(path)) ids.push_back(field(r, "image_id", path));
  std::vector<std::string> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    fail(ErrorCode::kMalformed, path.string() + ": duplicate image_id");
  }
  return ids;
}

EncoderFingerprints read_fingerprints(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  const json m = io::read_json(path);
  try {
    return {m.at("encoders").at("visual").get<std::string>(),
            m.at("encoders").at("text").get<std::string>()};
  } catch (const json::exception& e) {
    fail(ErrorCode::kMalformed, path.string() + ": " + e.what());
  }
}

std::vector<std::vector<std::string>> read_phrases(const fs::path& ingest,
                                                   std::span<const std::string> ids) {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < ids.size(); ++i) pos.emplace(ids[i], i);
  std::vector<std::vector<std::string>> out(ids.size());

  const bool given = fs::exists(ingest / "phrases.jsonl");
  const fs::path path = ingest / (given ? "phrases.jsonl" : "descriptions.jsonl");
  for (const auto& r : io::read_jsonl(path)) {
    const auto it = pos.find(field(r, "image_id", path));
    if (it == pos.end()) {
      fail(ErrorCode::kMalformed, path.string() + ": image " + r.at("image_id").dump() +
                                      " is not in index.jsonl");
    }
    try {
      if (given) {
        out[it->second] = r.at("phrases").get<std::vector<std::string>>();
      } else {
        out[it->second] = extract_noun_phrases(r.at("description").get<std::string>());
      }
    } catch (const json::exception& e) {
      fail(ErrorCode::kMalformed, path.string() + ": " + e.what());
    }
    auto& list = out[it->second];
    std::vector<std::string> unique;
    for (auto& p : list) {
      if (std::find(unique.begin(), unique.end(), p) == unique.end()) unique.push_back(std::move(p));
    }
    list = std::move(unique);
  }
  return out;
}

std::vector<PairRecord> pair_images(const fs::path& ingest) {
  const auto ids = read_index(ingest);
  const auto phrases = read_phrases(ingest, ids);
  std::vector<std::vector<PairRecord>> per_image(ids.size());
  for_each_image(ids, [&](std::size_t i) {
    if (phrases[i].empty()) return;
    const io::TextTable table = io::read_text_table(ingest / "embeddings" / (ids[i] + ".phrases"));
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t r = 0; r < table.texts.size(); ++r) row_of.emplace(table.texts[r], r);
    std::vector<std::size_t> rows;
    for (const auto& p : phrases[i]) {
      const auto it = row_of.find(p);
      if (it == row_of.end()) fail(ErrorCode::kMissingEmbedding, "no embedding for '" + p + "'");
      rows.push_back(it->second);
    }
    EmbeddingMatrix phrase_emb = table.embeddings.select_rows(rows);
    phrase_emb.require_normalized();
    EmbeddingMatrix seg_emb = io::read_embeddings(emb_path(ingest, ids[i], "segments"));
    seg_emb.require_normalized();
    per_image[i] = pair_labels_to_segments(
        ImageBundle{ids[i], std::move(seg_emb), phrases[i], std::move(phrase_emb)});
  });
  std::vector<PairRecord> all;
  for (auto& v : per_image) all.insert(all.end(), v.begin(), v.end());
  return all;
}

void segment_images(const fs::path& dir, const FelzenszwalbParams& params) {
  const auto ids = read_index(dir);
  for_each_image(ids, [&](std::size_t i) {
    fs::path image;
    for (const char* ext : {".png", ".ppm", ".pgm"}) {
      if (fs::exists(dir / "images" / (ids[i] + ext))) {
        image = dir / "images" / (ids[i] + ext);
        break;
      }
    }
    if (image.empty()) fail(ErrorCode::kIo, "no image file under " + (dir / "images").string());
    io::write_masks(dir / "masks" / (ids[i] + ".msk"),
                    felzenszwalb_segment(io::read_image(image), params));
  });
}

void pool_images(const fs::path& dir) {
  const auto ids = read_index(dir);
  for_each_image(ids, [&](std::size_t i) {
    const SegmentMaskSet masks = io::read_masks(dir / "masks" / (ids[i] + ".msk"));
    const FeatureMap features = io::read_feature_map(dir / "features" / (ids[i] + ".fmp"));
    io::write_embeddings(emb_path(dir, ids[i], "visual"), pool_segments(features, masks));
  });
}

SegmentTable gather_visual_segments(const fs::path& ingest, std::span<const PairRecord> pairs) {
  std::map<std::string, EmbeddingMatrix> cache;
  std::map<std::pair<std::string, std::size_t>, std::size_t> row_of;
  SegmentTable out;
  std::vector<float> data;
  std::size_t dim = 0;
  for (const auto& p : pairs) {
    auto it = cache.find(p.image_id);
    if (it == cache.end()) {
      EmbeddingMatrix m = io::read_embeddings(emb_path(ingest, p.image_id, "visual"));
      m.require_normalized();
      if (!cache.empty() && m.dim() != dim) {
        fail(ErrorCode::kDimMismatch, "visual embeddings of " + p.image_id + " have dim " +
                                          std::to_string(m.dim()) + ", expected " +
                                          std::to_string(dim));
      }
      dim = m.dim();
      it = cache.emplace(p.image_id, std::move(m)).first;
    }
    if (p.segment_index >= it->second.rows()) {
      fail(ErrorCode::kShapeMismatch, "pair refers to segment " +
                                          std::to_string(p.segment_index) + " of " +
                                          p.image_id + ", which has " +
                                          std::to_string(it->second.rows()));
    }
    const auto [rit, fresh] = row_of.emplace(std::pair(p.image_id, p.segment_index), row_of.size());
    if (fresh) {
      const auto v = it->second.row(p.segment_index);
      data.insert(data.end(), v.begin(), v.end());
    }
    out.rows.push_back(rit->second);
  }
  out.embeddings = EmbeddingMatrix::from_normalized(row_of.size(), dim, std::move(data));
  return out;
}

json settings_json(const EnhanceConfig& config) {
  return {{"delta_filter", config.filter.delta_filter},
          {"k_sim", config.k_sim},
          {"strategy", std::string(filter_kind_name(config.filter.kind))},
          {"center", config.center == CenterStrategy::kMedoid ? "medoid" : "median"},
          {"prune_ambiguous", config.prune_ambiguous},
          {"filter", config.apply_filter},
          {"enrich", config.apply_enrich}};
}

json report_json(const EnhanceReport& r) {
  json synonyms = json::array();
  for (const auto& [a, b] : r.synonym_pairs) synonyms.push_back({a, b});
  return {{"input_pairs", r.input_pairs},
          {"input_groups", r.input_groups},
          {"prune_skipped", r.prune_skipped},
          {"ambiguous_roots", r.ambiguous_roots},
          {"ambiguous_pairs_dropped", r.ambiguous_pairs_dropped},
          {"filtered_pairs_dropped", r.filtered_pairs_dropped},
          {"synonym_pairs", synonyms},
          {"enriched_pairs_added", r.enriched_pairs_added},
          {"output_pairs", r.output_pairs},
          {"output_segments", r.output_segments},
          {"output_labels", r.output_labels}};
}

EnhanceResult enhance_images(const fs::path& ingest, std::span<const PairRecord> pairs,
                             const fs::path& roots_base, const EnhanceConfig& config) {
  const SegmentTable table = gather_visual_segments(ingest, pairs);
  const RootEmbeddings roots = io::read_root_table(roots_base);
  return enhance_pairs(pairs, table.rows, table.embeddings, roots, config);
}

ReferenceSet build_reference(const fs::path& ingest, std::span<const PairRecord> pairs,
                             const fs::path& labels_base) {
  const SegmentTable table = gather_visual_segments(ingest, pairs);
  const LabelEmbeddingTable labels = io::read_label_table(labels_base);
  EncoderFingerprints fp{read_fingerprints(ingest).visual,
                         read_fingerprints(labels_base.parent_path()).text};
  return build_reference_set(pairs, table.rows, table.embeddings, labels, std::move(fp));
}

void retrieve_images(const ReferenceSet& ref, const fs::path& test_dir,
                     const fs::path& classes_base, const fs::path& out,
                     const RetrieveOptions& options) {
  const EncoderFingerprints test_fp = read_fingerprints(test_dir);
  const EncoderFingerprints class_fp = read_fingerprints(classes_base.parent_path());
  if (test_fp.visual != ref.fingerprints().visual) {
    fail(ErrorCode::kFingerprintMismatch, "test visual encoder '" + test_fp.visual +
                                              "' differs from reference '" +
                                              ref.fingerprints().visual + "'");
  }
  if (class_fp.text != ref.fingerprints().text) {
    fail(ErrorCode::kFingerprintMismatch, "class text encoder '" + class_fp.text +
                                              "' differs from reference '" +
                                              ref.fingerprints().text + "'");
  }
  const LabelEmbeddingTable classes = io::read_label_table(classes_base);
  // A2 depends only on the reference set and the classes
  const Matrix a2 = affinity_a2(ref, classes.embeddings, options.config);
  const auto ids = read_index(test_dir);
  fs::create_directories(out);
  for_each_image(ids, [&](std::size_t i) {
    const SegmentMaskSet masks = io::read_masks(test_dir / "masks" / (ids[i] + ".msk"));
    EmbeddingMatrix segs = io::read_embeddings(emb_path(test_dir, ids[i], "visual"));
    segs.require_normalized();
    if (segs.rows() != masks.size()) {
      fail(ErrorCode::kShapeMismatch, std::to_string(segs.rows()) + " embeddings for " +
                                          std::to_string(masks.size()) + " masks");
    }
    const Matrix a1 = affinity_a1(segs, ref, options.config);
    const PredictionMap pred = aggregate_pixels(segment_logits(a1, a2), masks);
    const LabelRaster labels = pred.label_raster();
    io::write_label_raster(out / (ids[i] + ".msk"), labels);
    if (options.write_png) io::write_png(out / (ids[i] + ".png"), io::colorize(labels));
    if (options.write_probabilities) {
      io::write_feature_map(out / (ids[i] + ".probs.fmp"),
                            FeatureMap{pred.height, pred.width, pred.classes, pred.probabilities});
    }
  });
}

json evaluate_images(const fs::path& pred_dir, const fs::path& gt_dir,
                     std::span<const std::string> ids, std::span<const std::string> class_names) {
  if (ids.empty()) fail(ErrorCode::kEmptyInput, "no images to evaluate");
  std::optional<ConfusionMatrix> conf;
  for (const auto& id : ids) {
    const LabelRaster gt = io::read_label_raster(gt_dir / (id + ".msk"));
    const LabelRaster pred = io::read_label_raster(pred_dir / (id + ".msk"));
    if (pred.classes != gt.classes) {
      fail(ErrorCode::kShapeMismatch, id + ": prediction has " + std::to_string(pred.classes) +
                                          " classes, ground truth " +
                                          std::to_string(gt.classes));
    }
    if (!conf) conf.emplace(gt.classes);
    if (conf->classes() != gt.classes) {
      fail(ErrorCode::kShapeMismatch, id + ": class count differs from earlier images");
    }
    conf->accumulate(pred, gt);
  }
  if (!class_names.empty() && class_names.size() != conf->classes()) {
    fail(ErrorCode::kShapeMismatch, std::to_string(class_names.size()) + " class names for " +
                                        std::to_string(conf->classes()) + " classes");
  }
  const IouResult iou = miou(*conf);
  json per_class = json::array();
  for (std::size_t j = 0; j < iou.per_class.size(); ++j) {
    json entry = {{"class", j}};
    if (!class_names.empty()) entry["name"] = class_names[j];
    entry["iou"] = iou.per_class[j] ? json(*iou.per_class[j]) : json(nullptr);
    per_class.push_back(std::move(entry));
  }
  return {{"images", ids.size()},
          {"classes", conf->classes()},
          {"pixels", conf->total()},
          {"miou", iou.miou},
          {"per_class", per_class}};
}

}  // namespace segref::pipeline
