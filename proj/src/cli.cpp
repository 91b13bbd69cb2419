#include "segref/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"

#include "segref/core/parallel.hpp"
#include "segref/core/simd.hpp"
#include "segref/io.hpp"
#include "segref/pipeline.hpp"
#include "segref/synth.hpp"

namespace segref::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string validate_strategy(const std::string& s) {
  try {
    parse_filter_kind(s);
    return {};
  } catch (const Error& e) {
    return e.message();
  }
}

std::string validate_center(const std::string& s) {
  return s == "median" || s == "medoid" ? "" : "center must be 'median' or 'medoid'";
}

void print(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

// ---- inspect -------------------------------------------------------------------

json inspect_binary(const fs::path& path) {
  const io::Bytes bytes = io::read_file(path);
  switch (io::sniff(bytes)) {
    case io::FileKind::kEmbeddings: {
      EmbeddingMatrix m = io::decode_embeddings(bytes);
      bool normalized = true;
      try {
        m.require_normalized();
      } catch (const Error&) {
        normalized = false;
      }
      return {{"kind", "embeddings"}, {"rows", m.rows()}, {"dim", m.dim()},
              {"normalized", normalized}};
    }
    case io::FileKind::kFeatureMap: {
      const FeatureMap f = io::decode_feature_map(bytes);
      return {{"kind", "feature-map"}, {"grid_h", f.grid_h}, {"grid_w", f.grid_w},
              {"dim", f.dim}};
    }
    case io::FileKind::kLabelRaster: {
      const LabelRaster r = io::decode_label_raster(bytes);
      std::set<std::uint32_t> present;
      std::size_t ignored = 0;
      for (std::uint32_t id : r.ids) {
        if (id == kIgnoreLabel) {
          ++ignored;
        } else {
          present.insert(id);
        }
      }
      return {{"kind", "label-raster"}, {"height", r.height}, {"width", r.width},
              {"classes", r.classes}, {"classes_present", present.size()},
              {"ignored_pixels", ignored},
              {"partition", ignored == 0 && present.size() == r.classes}};
    }
    case io::FileKind::kMaskStack: {
      const SegmentMaskSet s = io::decode_mask_stack(bytes);
      return {{"kind", "mask-stack"}, {"height", s.height()}, {"width", s.width()},
              {"masks", s.size()}};
    }
    case io::FileKind::kAssignments: {
      const SparseAssignment a = io::decode_assignments(bytes);
      return {{"kind", "assignments"}, {"rows", a.rows()}, {"cols", a.cols()},
              {"nnz", a.nnz()}};
    }
  }
  fail(ErrorCode::kBadMagic, path.string());
}

json inspect_reference_set(const fs::path& dir) {
  const io::LoadedReferenceSet loaded = io::load_reference_set(dir);
  const ReferenceSet& ref = loaded.ref;
  std::map<std::string, std::size_t> by_source;
  std::set<std::string> roots;
  for (const auto& l : ref.label_meta()) {
    ++by_source[std::string(label_source_name(l.source))];
    roots.insert(l.root);
  }
  json out = {{"kind", "reference-set"},
              {"segments", ref.segment_count()},
              {"labels", ref.label_count()},
              {"assignments", ref.assignments().nnz()},
              {"roots", roots.size()},
              {"labels_by_source", by_source},
              {"encoders", {{"visual", ref.fingerprints().visual},
                            {"text", ref.fingerprints().text}}}};
  const json& enh = loaded.manifest["enhancement"];
  if (enh.is_object() && enh.contains("report")) {
    const json& rep = enh["report"];
    const auto check = [&](const char* key, std::size_t actual) {
      if (rep.at(key).get<std::size_t>() != actual) {
        fail(ErrorCode::kManifestMismatch,
             std::string("enhancement report ") + key + " = " + rep.at(key).dump() +
                 ", reference set has " + std::to_string(actual));
      }
    };
    check("output_pairs", ref.assignments().nnz());
    check("output_segments", ref.segment_count());
    check("output_labels", ref.label_count());
    out["enhancement"] = enh;
    out["report_consistent"] = true;
  }
  return out;
}

json inspect_ingest(const fs::path& dir) {
  const auto ids = pipeline::read_index(dir);
  std::map<std::string, std::size_t> counts;
  const auto present = [&](const fs::path& p) { return fs::exists(p); };
  for (const auto& id : ids) {
    std::optional<std::size_t> segments;
    const fs::path masks = dir / "masks" / (id + ".msk");
    if (present(masks)) {
      segments = io::read_masks(masks).size();
      ++counts["masks"];
    }
    if (present(dir / "features" / (id + ".fmp"))) {
      io::read_feature_map(dir / "features" / (id + ".fmp"));
      ++counts["features"];
    }
    for (const char* kind : {"segments", "visual"}) {
      const fs::path p = dir / "embeddings" / (id + "." + kind + ".emb");
      if (!present(p)) continue;
      const EmbeddingMatrix m = io::read_embeddings(p);
      if (segments && m.rows() != *segments) {
        fail(ErrorCode::kShapeMismatch, p.string() + " has " + std::to_string(m.rows()) +
                                            " rows for " + std::to_string(*segments) +
                                            " masks");
      }
      ++counts[std::string(kind) + "_embeddings"];
    }
    if (present(dir / "gt" / (id + ".msk"))) {
      io::read_label_raster(dir / "gt" / (id + ".msk"));
      ++counts["ground_truth"];
    }
  }
  return {{"kind", "ingest-directory"}, {"images", ids.size()}, {"files", counts},
          {"encoders", {{"visual", pipeline::read_fingerprints(dir).visual},
                        {"text", pipeline::read_fingerprints(dir).text}}}};
}

json inspect_path(const fs::path& path) {
  if (fs::is_directory(path)) {
    if (fs::exists(path / "assignments.asg")) return inspect_reference_set(path);
    if (fs::exists(path / "index.jsonl")) return inspect_ingest(path);
    fail(ErrorCode::kMalformed, path.string() + ": not a reference set or ingest directory");
  }
  if (!fs::exists(path)) fail(ErrorCode::kIo, "no such file " + path.string());
  const std::string ext = path.extension().string();
  if (ext == ".jsonl") {
    const auto records = io::read_jsonl(path);
    if (!records.empty() && records.front().contains("segment")) {
      const auto pairs = io::read_pairs(path);
      std::set<std::pair<std::string, std::size_t>> segments;
      std::set<std::string> phrases, roots;
      std::map<std::string, std::size_t> by_source;
      for (const auto& p : pairs) {
        segments.emplace(p.image_id, p.segment_index);
        phrases.insert(p.phrase);
        roots.insert(p.root);
        ++by_source[std::string(label_source_name(p.source))];
      }
      return {{"kind", "pairs"}, {"pairs", pairs.size()}, {"segments", segments.size()},
              {"labels", phrases.size()}, {"roots", roots.size()}, {"by_source", by_source}};
    }
    return {{"kind", "jsonl"}, {"records", records.size()}};
  }
  if (ext == ".json") return {{"kind", "json"}, {"value", io::read_json(path)}};
  if (ext == ".png" || ext == ".ppm" || ext == ".pgm") {
    const ImageRaster img = io::read_image(path);
    return {{"kind", "image"}, {"height", img.height}, {"width", img.width},
            {"channels", img.channels}};
  }
  return inspect_binary(path);
}

// ---- command wiring --------------------------------------------------------------

struct Options {
  // shared paths
  std::string ingest, dir, pairs, out, roots, labels, report, ref, test, classes, pred;
  std::string image, masks, features, path;

  // enhance
  double delta_filter = 30.0;
  std::size_t k_sim = 30;
  std::string strategy = "group-intra-modal";
  std::string center = "median";
  bool no_prune = false, no_filter = false, no_enrich = false;

  // segment
  FelzenszwalbParams seg;

  // retrieve
  double tau1 = 1.0, tau2 = 1.0;
  std::size_t top_k = 0;
  bool png = false, probs = false;

  // synth
  synth::PipelineSpec spec;

  // global
  std::size_t threads = 1;
  std::string isa = "auto";
};

EnhanceConfig enhance_config(const Options& o) {
  EnhanceConfig c;
  c.filter.kind = parse_filter_kind(o.strategy);
  c.filter.delta_filter = o.delta_filter;
  c.k_sim = o.k_sim;
  c.center = o.center == "medoid" ? CenterStrategy::kMedoid : CenterStrategy::kCoordinateMedian;
  c.prune_ambiguous = !o.no_prune;
  c.apply_filter = !o.no_filter;
  c.apply_enrich = !o.no_enrich;
  return c;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reference-set open-vocabulary segmentation over pre-extracted embeddings",
               "segref"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Read options from a TOML/INI file");
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  Options o;
  app.add_option("--threads", o.threads, "Worker threads (never changes outputs)")
      ->envname("SEGREF_THREADS")
      ->check(CLI::Range(std::size_t{1}, std::size_t{256}));
  app.add_option("--isa", o.isa, "Kernel variant: auto, scalar or avx2")
      ->check(CLI::IsMember({"auto", "scalar", "avx2"}));

  std::function<void()> action;

  auto* pair = app.add_subcommand("pair", "Pair description phrases with segments");
  pair->add_option("--ingest", o.ingest, "Reference ingest directory")
      ->required()->check(CLI::ExistingDirectory);
  pair->add_option("--out", o.out, "Output pairs (.jsonl)")->required();
  pair->callback([&] {
    action = [&] {
      const auto pairs = pipeline::pair_images(o.ingest);
      io::write_pairs(o.out, pairs);
      out << "pairs: " << pairs.size() << '\n';
    };
  });

  auto* enhance = app.add_subcommand("enhance", "Prune, filter and enrich pairs");
  enhance->add_option("--ingest", o.ingest, "Reference ingest directory")
      ->required()->check(CLI::ExistingDirectory);
  enhance->add_option("--pairs", o.pairs, "Input pairs (.jsonl)")
      ->required()->check(CLI::ExistingFile);
  enhance->add_option("--roots", o.roots, "Root text table base path (<base>.jsonl/.emb)")
      ->required();
  enhance->add_option("--out", o.out, "Output pairs (.jsonl)")->required();
  enhance->add_option("--report", o.report, "Report (.json)");
  enhance->add_option("--delta-filter", o.delta_filter, "Percent of each group to drop")
      ->capture_default_str()->check(CLI::Range(0.0, 100.0));
  enhance->add_option("--k-sim", o.k_sim, "Synonym root pairs used for enrichment")
      ->capture_default_str();
  enhance->add_option("--strategy", o.strategy,
                      "global-cross-modal | group-cross-modal | group-intra-modal | "
                      "group-intra-modal-weighted (or a-d)")
      ->capture_default_str()->check(validate_strategy, "strategy");
  enhance->add_option("--center", o.center, "Group center: median or medoid")
      ->capture_default_str()->check(validate_center, "center");
  enhance->add_flag("--no-prune", o.no_prune, "Keep ambiguous high-frequency labels");
  enhance->add_flag("--no-filter", o.no_filter, "Skip group filtering");
  enhance->add_flag("--no-enrich", o.no_enrich, "Skip synonym enrichment");
  enhance->callback([&] {
    action = [&] {
      const EnhanceConfig config = enhance_config(o);
      const auto pairs = io::read_pairs(o.pairs);
      const EnhanceResult result = pipeline::enhance_images(o.ingest, pairs, o.roots, config);
      io::write_pairs(o.out, result.pairs);
      const json report = {{"settings", pipeline::settings_json(config)},
                           {"report", pipeline::report_json(result.report)}};
      if (!o.report.empty()) io::write_json(o.report, report);
      print(out, report["report"]);
    };
  });

  auto* build = app.add_subcommand("build-ref", "Build a reference set from pairs");
  build->add_option("--ingest", o.ingest, "Reference ingest directory")
      ->required()->check(CLI::ExistingDirectory);
  build->add_option("--pairs", o.pairs, "Pairs (.jsonl)")->required()->check(CLI::ExistingFile);
  build->add_option("--labels", o.labels, "Templated label text table base path")->required();
  build->add_option("--report", o.report, "Enhancement report to record in the manifest")
      ->check(CLI::ExistingFile);
  build->add_option("--out", o.out, "Output reference-set directory")->required();
  build->callback([&] {
    action = [&] {
      const auto pairs = io::read_pairs(o.pairs);
      const ReferenceSet ref = pipeline::build_reference(o.ingest, pairs, o.labels);
      io::save_reference_set(o.out, ref,
                             o.report.empty() ? json::object() : io::read_json(o.report));
      out << "segments: " << ref.segment_count() << "\nlabels: " << ref.label_count()
          << "\nassignments: " << ref.assignments().nnz() << '\n';
    };
  });

  auto* segment = app.add_subcommand("segment", "Graph-based segmentation of images");
  segment->add_option("--dir", o.dir, "Directory with index.jsonl and images/")
      ->check(CLI::ExistingDirectory);
  segment->add_option("--image", o.image, "Single image")->check(CLI::ExistingFile);
  segment->add_option("--out", o.out, "Output masks for --image");
  segment->add_option("--scale", o.seg.scale, "Merge threshold scale k")
      ->capture_default_str()->check(CLI::PositiveNumber);
  segment->add_option("--sigma", o.seg.sigma, "Gaussian pre-smoothing")
      ->capture_default_str()->check(CLI::NonNegativeNumber);
  segment->add_option("--min-size", o.seg.min_size, "Minimum component size")
      ->capture_default_str();
  segment->callback([&] {
    if (o.dir.empty() == o.image.empty() || (!o.image.empty() && o.out.empty())) {
      throw CLI::ValidationError("segment", "give either --dir, or --image with --out");
    }
    action = [&] {
      if (!o.dir.empty()) {
        pipeline::segment_images(o.dir, o.seg);
      } else {
        const SegmentMaskSet masks = felzenszwalb_segment(io::read_image(o.image), o.seg);
        io::write_masks(o.out, masks);
        out << "segments: " << masks.size() << '\n';
      }
    };
  });

  auto* pool = app.add_subcommand("pool", "Mask average pooling of feature maps");
  pool->add_option("--dir", o.dir, "Directory with index.jsonl, masks/ and features/")
      ->check(CLI::ExistingDirectory);
  pool->add_option("--masks", o.masks, "Single mask file")->check(CLI::ExistingFile);
  pool->add_option("--features", o.features, "Single feature map")->check(CLI::ExistingFile);
  pool->add_option("--out", o.out, "Output embeddings for --masks/--features");
  pool->callback([&] {
    const bool single = !o.masks.empty() || !o.features.empty();
    if (o.dir.empty() == !single || (single && (o.masks.empty() || o.features.empty() ||
                                                o.out.empty()))) {
      throw CLI::ValidationError("pool", "give either --dir, or --masks, --features and --out");
    }
    action = [&] {
      if (!o.dir.empty()) {
        pipeline::pool_images(o.dir);
      } else {
        io::write_embeddings(o.out, pool_segments(io::read_feature_map(o.features),
                                                  io::read_masks(o.masks)));
      }
    };
  });

  auto* retrieve = app.add_subcommand("retrieve", "Label test segments with a reference set");
  retrieve->add_option("--ref", o.ref, "Reference-set directory")
      ->required()->check(CLI::ExistingDirectory);
  retrieve->add_option("--test", o.test, "Test directory (masks/ and embeddings/ filled)")
      ->required()->check(CLI::ExistingDirectory);
  retrieve->add_option("--classes", o.classes, "Templated class text table base path")
      ->required();
  retrieve->add_option("--out", o.out, "Prediction directory")->required();
  retrieve->add_option("--tau1", o.tau1, "Segment affinity temperature")
      ->capture_default_str()->check(CLI::PositiveNumber);
  retrieve->add_option("--tau2", o.tau2, "Label affinity temperature")
      ->capture_default_str()->check(CLI::PositiveNumber);
  retrieve->add_option("--top-k", o.top_k, "Keep only each segment's top-k reference matches");
  retrieve->add_flag("--png", o.png, "Also write colorized PNGs");
  retrieve->add_flag("--probs", o.probs, "Also write per-pixel class probabilities (FMP1)");
  retrieve->callback([&] {
    action = [&] {
      pipeline::RetrieveOptions opts;
      opts.config.temperature_a1 = o.tau1;
      opts.config.temperature_a2 = o.tau2;
      if (o.top_k > 0) opts.config.top_k_candidates = o.top_k;
      opts.write_png = o.png;
      opts.write_probabilities = o.probs;
      const io::LoadedReferenceSet loaded = io::load_reference_set(o.ref);
      pipeline::retrieve_images(loaded.ref, o.test, o.classes, o.out, opts);
    };
  });

  auto* eval = app.add_subcommand("eval", "mIoU of predictions against ground truth");
  eval->add_option("--pred", o.pred, "Prediction directory")
      ->required()->check(CLI::ExistingDirectory);
  eval->add_option("--test", o.test, "Test directory with index.jsonl and gt/")
      ->required()->check(CLI::ExistingDirectory);
  eval->add_option("--classes", o.classes, "Class text table base path (for names)");
  eval->add_option("--out", o.out, "Results (.json)");
  eval->callback([&] {
    action = [&] {
      std::vector<std::string> names;
      if (!o.classes.empty()) names = io::read_text_table(o.classes).texts;
      const auto ids = pipeline::read_index(o.test);
      const json results = pipeline::evaluate_images(o.pred, fs::path(o.test) / "gt", ids, names);
      if (!o.out.empty()) io::write_json(o.out, results);
      out << "mIoU: " << results["miou"].get<double>() << '\n';
    };
  });

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic ingest world");
  synth_cmd->add_option("--out", o.out, "Output directory")->required();
  synth_cmd->add_option("--seed", o.spec.seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--concepts", o.spec.concepts, "Concepts (3-16)")->capture_default_str();
  synth_cmd->add_option("--ref-images", o.spec.ref_images, "Reference images")
      ->capture_default_str();
  synth_cmd->add_option("--test-images", o.spec.test_images, "Test images")
      ->capture_default_str();
  synth_cmd->add_option("--hallucination", o.spec.hallucination,
                        "Fraction of segments described as another concept")
      ->capture_default_str();
  synth_cmd->add_option("--visual-noise", o.spec.visual_noise, "Per-patch feature noise radius")
      ->capture_default_str();
  synth_cmd->callback([&] {
    action = [&] {
      synth::write_pipeline_world(o.spec, o.out);
      out << "wrote " << o.out << '\n';
    };
  });

  auto* inspect = app.add_subcommand("inspect", "Validate an artifact and summarize it");
  inspect->add_option("path", o.path, "File or directory")->required();
  inspect->callback([&] { action = [&] { print(out, inspect_path(o.path)); }; });

  auto* render = app.add_subcommand("render", "Colorize a label raster or mask file");
  render->add_option("--labels", o.masks, "MSK1 or MSKS file")
      ->required()->check(CLI::ExistingFile);
  render->add_option("--out", o.out, "Output image (.png or .ppm)")->required();
  render->callback([&] {
    action = [&] {
      const io::Bytes bytes = io::read_file(o.masks);
      LabelRaster labels;
      if (io::sniff(bytes) == io::FileKind::kMaskStack) {
        // each pixel takes the first mask covering it
        const SegmentMaskSet s = io::decode_mask_stack(bytes);
        labels = {s.height(), s.width(), s.size(), std::vector<std::uint32_t>(s.pixels(), kIgnoreLabel)};
        for (std::size_t m = s.size(); m-- > 0;) {
          for (std::size_t p = 0; p < s.pixels(); ++p) {
            if (s.covers(m, p)) labels.ids[p] = static_cast<std::uint32_t>(m);
          }
        }
      } else {
        labels = io::decode_label_raster(bytes);
      }
      const ImageRaster img = io::colorize(labels);
      if (fs::path(o.out).extension() == ".ppm") {
        io::write_ppm(o.out, img);
      } else {
        io::write_png(o.out, img);
      }
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  parallel::set_thread_count(o.threads);
  if (o.isa == "scalar") {
    simd::set_isa(simd::Isa::kScalar);
  } else if (o.isa == "avx2" && !simd::set_isa(simd::Isa::kAvx2)) {
    err << "error: AVX2 kernels are not available on this machine\n";
    return 2;
  }

  try {
    if (action) action();
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: Io: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace segref::cli
