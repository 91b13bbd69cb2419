#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "segref/io.hpp"

namespace segref::io {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(const fs::path& path, std::size_t line, const std::string& what) {
  fail(ErrorCode::kMalformed, path.string() + ":" + std::to_string(line) + ": " + what);
}

std::string dump(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::strict);
}

}  // namespace

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      malformed(path, n, e.what());
    }
  }
  if (in.bad()) fail(ErrorCode::kIo, "error reading " + path.string());
  return out;
}

void write_jsonl(const fs::path& path, std::span<const json> records) {
  std::string text;
  for (const json& r : records) {
    text += dump(r);
    text += '\n';
  }
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kMalformed, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& value) {
  const std::string text = value.dump(2, ' ', false, json::error_handler_t::strict) + "\n";
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---- pairs --------------------------------------------------------------------

json pair_to_json(const PairRecord& p) {
  json j = {{"image_id", p.image_id},
            {"segment", p.segment_index},
            {"phrase", p.phrase},
            {"root", p.root},
            {"source", std::string(label_source_name(p.source))}};
  // NaN marks "score unknown" and is stored as null
  j["score"] = std::isfinite(p.cross_modal_score) ? json(p.cross_modal_score) : json(nullptr);
  return j;
}

PairRecord pair_from_json(const json& j) {
  try {
    PairRecord p;
    p.image_id = j.at("image_id").get<std::string>();
    p.segment_index = j.at("segment").get<std::size_t>();
    p.phrase = j.at("phrase").get<std::string>();
    p.root = j.contains("root") ? j.at("root").get<std::string>() : root_of_phrase(p.phrase);
    const json& score = j.contains("score") ? j.at("score") : json(nullptr);
    p.cross_modal_score = score.is_null() ? std::numeric_limits<float>::quiet_NaN()
                                          : score.get<float>();
    p.source = j.contains("source") ? parse_label_source(j.at("source").get<std::string>())
                                    : LabelSource::kPaired;
    return p;
  } catch (const json::exception& e) {
    fail(ErrorCode::kMalformed, std::string("pair record: ") + e.what());
  }
}

std::vector<PairRecord> read_pairs(const fs::path& path) {
  const auto records = read_jsonl(path);
  std::vector<PairRecord> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      out.push_back(pair_from_json(records[i]));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ": record " + std::to_string(i) + ": " + e.message());
    }
  }
  return out;
}

void write_pairs(const fs::path& path, std::span<const PairRecord> pairs) {
  std::vector<json> records;
  records.reserve(pairs.size());
  for (const auto& p : pairs) records.push_back(pair_to_json(p));
  write_jsonl(path, records);
}

// ---- text tables ------------------------------------------------------------

TextTable read_text_table(const fs::path& base) {
  fs::path meta = base;
  meta += ".jsonl";
  fs::path emb = base;
  emb += ".emb";
  const auto records = read_jsonl(meta);
  TextTable table;
  bool templated = false;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      table.texts.push_back(records[i].at("text").get<std::string>());
      const bool has = records[i].contains("prompts");
      if (i == 0) templated = has;
      if (has != templated) malformed(meta, i + 1, "records disagree on carrying prompts");
      if (has) {
        table.prompts.push_back(records[i].at("prompts").get<std::vector<std::string>>());
        if (table.prompts.back().empty()) malformed(meta, i + 1, "empty prompt list");
        if (table.prompts.back().size() != table.prompts.front().size()) {
          malformed(meta, i + 1, "prompt count differs from the first record");
        }
      }
    } catch (const json::exception& e) {
      malformed(meta, i + 1, e.what());
    }
  }
  table.rows_per_text = templated ? table.prompts.front().size() : 1;
  table.embeddings = read_embeddings(emb);
  if (table.embeddings.rows() != table.texts.size() * table.rows_per_text) {
    fail(ErrorCode::kShapeMismatch,
         emb.string() + " has " + std::to_string(table.embeddings.rows()) + " rows, " +
             meta.string() + " implies " +
             std::to_string(table.texts.size() * table.rows_per_text));
  }
  return table;
}

void write_text_table(const fs::path& base, const TextTable& table) {
  if (table.embeddings.rows() != table.texts.size() * table.rows_per_text ||
      (!table.prompts.empty() && table.prompts.size() != table.texts.size())) {
    fail(ErrorCode::kShapeMismatch, "text table rows do not match its texts");
  }
  std::vector<json> records;
  for (std::size_t i = 0; i < table.texts.size(); ++i) {
    json r = {{"text", table.texts[i]}};
    if (!table.prompts.empty()) r["prompts"] = table.prompts[i];
    records.push_back(std::move(r));
  }
  fs::path meta = base;
  meta += ".jsonl";
  fs::path emb = base;
  emb += ".emb";
  write_jsonl(meta, records);
  write_embeddings(emb, table.embeddings);
}

LabelEmbeddingTable read_label_table(const fs::path& base) {
  TextTable table = read_text_table(base);
  if (table.prompts.empty() && !table.texts.empty()) {
    fail(ErrorCode::kMalformed, base.string() + ": label tables must carry prompts");
  }
  LabelEmbeddingTable out;
  std::vector<float> data;
  data.reserve(table.texts.size() * table.embeddings.dim());
  for (std::size_t i = 0; i < table.texts.size(); ++i) {
    const auto expected = compose_prompts(table.texts[i]);
    if (!std::equal(expected.begin(), expected.end(), table.prompts[i].begin(),
                    table.prompts[i].end())) {
      fail(ErrorCode::kMalformed,
           base.string() + ": prompts for '" + table.texts[i] + "' differ from the templates");
    }
    std::vector<std::size_t> rows(table.rows_per_text);
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = i * table.rows_per_text + r;
    const auto mean = average_template_embeddings(table.embeddings.select_rows(rows));
    data.insert(data.end(), mean.begin(), mean.end());
  }
  out.phrases = std::move(table.texts);
  out.embeddings =
      EmbeddingMatrix::from_normalized(out.phrases.size(), table.embeddings.dim(), std::move(data));
  return out;
}

RootEmbeddings read_root_table(const fs::path& base) {
  TextTable table = read_text_table(base);
  if (table.rows_per_text != 1) {
    fail(ErrorCode::kMalformed, base.string() + ": root tables hold one row per root");
  }
  table.embeddings.require_normalized();
  return {std::move(table.texts), std::move(table.embeddings)};
}

// ---- reference sets ------------------------------------------------------------

void save_reference_set(const fs::path& dir, const ReferenceSet& ref, const json& enhancement) {
  fs::create_directories(dir);
  write_embeddings(dir / "segments.emb", ref.segments());
  write_embeddings(dir / "labels.emb", ref.labels());
  write_assignments(dir / "assignments.asg", ref.assignments());
  std::vector<json> labels;
  labels.reserve(ref.label_meta().size());
  for (const auto& l : ref.label_meta()) {
    labels.push_back({{"id", l.id},
                      {"phrase", l.phrase},
                      {"root", l.root},
                      {"source", std::string(label_source_name(l.source))}});
  }
  write_jsonl(dir / "labels.jsonl", labels);
  json manifest = {{"format", "segref-reference-set"},
                   {"version", kFormatVersion},
                   {"segments", ref.segment_count()},
                   {"labels", ref.label_count()},
                   {"assignments", ref.assignments().nnz()},
                   {"segment_dim", ref.segments().dim()},
                   {"label_dim", ref.labels().dim()},
                   {"encoders", {{"visual", ref.fingerprints().visual},
                                 {"text", ref.fingerprints().text}}},
                   {"enhancement", enhancement}};
  write_json(dir / "manifest.json", manifest);
}

LoadedReferenceSet load_reference_set(const fs::path& dir) {
  for (const char* name :
       {"manifest.json", "segments.emb", "labels.emb", "assignments.asg", "labels.jsonl"}) {
    if (!fs::is_regular_file(dir / name)) {
      fail(ErrorCode::kIo, "reference set " + dir.string() + " is missing " + name);
    }
  }
  json manifest = read_json(dir / "manifest.json");
  EmbeddingMatrix segments = read_embeddings(dir / "segments.emb");
  EmbeddingMatrix labels = read_embeddings(dir / "labels.emb");
  SparseAssignment assignments = read_assignments(dir / "assignments.asg");
  const auto records = read_jsonl(dir / "labels.jsonl");

  std::vector<LabelMeta> meta;
  EncoderFingerprints fingerprints;
  try {
    if (manifest.at("format").get<std::string>() != "segref-reference-set") {
      fail(ErrorCode::kManifestMismatch, "manifest format is not a reference set");
    }
    if (manifest.at("version").get<std::uint32_t>() != kFormatVersion) {
      fail(ErrorCode::kBadVersion, "manifest version " + manifest.at("version").dump());
    }
    const auto expect = [&](const char* key, std::size_t actual) {
      const auto want = manifest.at(key).get<std::size_t>();
      if (want != actual) {
        fail(ErrorCode::kManifestMismatch, std::string("manifest ") + key + " = " +
                                               std::to_string(want) + ", files have " +
                                               std::to_string(actual));
      }
    };
    expect("segments", segments.rows());
    expect("labels", labels.rows());
    expect("assignments", assignments.nnz());
    expect("segment_dim", segments.dim());
    expect("label_dim", labels.dim());
    expect("segments", assignments.rows());
    expect("labels", assignments.cols());
    expect("labels", records.size());
    fingerprints.visual = manifest.at("encoders").at("visual").get<std::string>();
    fingerprints.text = manifest.at("encoders").at("text").get<std::string>();
    for (std::size_t i = 0; i < records.size(); ++i) {
      LabelMeta m;
      m.id = records[i].at("id").get<std::size_t>();
      m.phrase = records[i].at("phrase").get<std::string>();
      m.root = records[i].at("root").get<std::string>();
      m.source = parse_label_source(records[i].at("source").get<std::string>());
      if (m.id != i) {
        fail(ErrorCode::kMalformed, "labels.jsonl record " + std::to_string(i) + " has id " +
                                        std::to_string(m.id));
      }
      meta.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kMalformed, dir.string() + ": " + e.what());
  }

  try {
    segments.require_normalized();
    labels.require_normalized();
    return {ReferenceSet::create(std::move(segments), std::move(labels), std::move(assignments),
                                 std::move(meta), std::move(fingerprints)),
            std::move(manifest)};
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kOrphanSegment || e.code() == ErrorCode::kOrphanLabel) {
      throw Error(ErrorCode::kOrphanRowOrColumn, dir.string() + ": " + e.message());
    }
    throw;
  }
}

}  // namespace segref::io
