#include "segref/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "segref/core/kernels.hpp"
#include "segref/io.hpp"
#include "segref/retrieval.hpp"

namespace segref::synth {

namespace fs = std::filesystem;
using nlohmann::json;

double Rng::normal() noexcept {
  double s = 0.0;
  for (int i = 0; i < 12; ++i) s += uniform();
  return s - 6.0;
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  for (;;) {
    const std::uint64_t x = engine_();
    if (x < limit) return x % n;
  }
}

std::uint64_t hash_string(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

std::uint64_t derive(std::uint64_t seed, std::string_view tag) noexcept {
  // splitmix64 finalizer over seed ^ hash(tag)
  std::uint64_t z = seed ^ hash_string(tag);
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::vector<float> to_unit(const std::vector<double>& v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  const double n = std::sqrt(n2);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / n);
  return out;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::kInfeasibleSpec, what);
}

}  // namespace

std::vector<float> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (;;) {
    double n2 = 0.0;
    for (double& x : v) {
      x = rng.normal();
      n2 += x * x;
    }
    if (n2 > 1e-6) return to_unit(v);
  }
}

EmbeddingMatrix orthonormal_centers(Rng& rng, std::size_t count, std::size_t dim) {
  require(count <= dim, "cannot place " + std::to_string(count) +
                            " orthonormal centers in dimension " + std::to_string(dim));
  std::vector<std::vector<double>> basis;
  std::vector<float> data;
  data.reserve(count * dim);
  while (basis.size() < count) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    for (const auto& b : basis) {
      double p = 0.0;
      for (std::size_t j = 0; j < dim; ++j) p += v[j] * b[j];
      for (std::size_t j = 0; j < dim; ++j) v[j] -= p * b[j];
    }
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    if (n2 < 1e-6) continue;  // nearly dependent draw
    const double n = std::sqrt(n2);
    for (double& x : v) x /= n;
    for (double x : v) data.push_back(static_cast<float>(x));
    basis.push_back(std::move(v));
  }
  return l2_normalize(EmbeddingMatrix(count, dim, std::move(data)));
}

std::vector<float> perturb(Rng& rng, std::span<const float> center, double radius) {
  if (radius == 0.0) return {center.begin(), center.end()};
  const auto u = random_unit(rng, center.size());
  std::vector<double> v(center.size());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = center[j] + radius * u[j];
  return to_unit(v);
}

// ---- labeled sample worlds ---------------------------------------------------

void SynthSpec::validate() const {
  require(concepts >= 2, "need at least two concepts");
  require(samples_per_concept >= 1, "need at least one sample per concept");
  require(concepts <= dim, "concepts must not exceed dim");
  require(noise >= 0.0 && noise < 1.0, "noise radius must lie in [0, 1)");
  require(misalignment >= 0.0 && misalignment <= 1.0, "misalignment must lie in [0, 1]");
  require(margin > 2.0 * noise, "margin must exceed twice the noise radius");
  require(margin <= 1.0, "margin above 1 is unreachable for orthonormal centers");
}

SynthWorld generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SynthWorld w;
  w.centers = orthonormal_centers(rng, spec.concepts, spec.dim);
  const std::size_t per = spec.samples_per_concept;
  const auto planted = static_cast<std::size_t>(std::floor(spec.misalignment * per + 0.5));

  std::vector<float> data;
  data.reserve(spec.concepts * per * spec.dim);
  for (std::size_t a = 0; a < spec.concepts; ++a) {
    std::vector<std::size_t> order(per);
    for (std::size_t s = 0; s < per; ++s) order[s] = s;
    rng.shuffle(order);
    std::vector<bool> is_outlier(per, false);
    for (std::size_t i = 0; i < planted; ++i) is_outlier[order[i]] = true;

    for (std::size_t s = 0; s < per; ++s) {
      std::size_t truth = a;
      if (is_outlier[s]) {
        truth = rng.below(spec.concepts - 1);
        if (truth >= a) ++truth;
        w.outliers.push_back(a * per + s);
      }
      std::vector<float> x;
      for (int attempt = 0;; ++attempt) {
        require(attempt < 1000, "margin unreachable at this noise radius");
        x = perturb(rng, w.centers.row(truth), spec.noise);
        const double own = cosine(x, w.centers.row(truth));
        double other = -1.0;
        for (std::size_t b = 0; b < spec.concepts; ++b) {
          if (b != truth) other = std::max(other, cosine(x, w.centers.row(b)));
        }
        if (own - other >= spec.margin) break;
      }
      data.insert(data.end(), x.begin(), x.end());
      w.label.push_back(a);
      w.truth.push_back(truth);
    }
  }
  w.samples = EmbeddingMatrix(spec.concepts * per, spec.dim, std::move(data));
  w.samples.require_normalized();
  return w;
}

std::vector<float> planted_cross_modal_scores(const SynthWorld& world, const ScoreNoise& noise,
                                              std::uint64_t seed) {
  Rng rng(derive(seed, "cross-modal"));
  std::size_t concepts = 0;
  for (std::size_t l : world.label) concepts = std::max(concepts, l + 1);
  std::vector<double> bias(concepts);
  for (double& b : bias) b = noise.label_bias_sd * rng.normal();
  std::vector<float> scores(world.label.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool outlier = world.label[i] != world.truth[i];
    scores[i] = static_cast<float>(noise.base + bias[world.label[i]] +
                                   noise.noise_sd * rng.normal() -
                                   (outlier ? noise.outlier_shift : 0.0));
  }
  return scores;
}

// ---- text encoder --------------------------------------------------------------

namespace {

std::vector<std::string> alpha_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isalpha(static_cast<unsigned char>(ch))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

TextEncoder::TextEncoder(std::uint64_t seed, const EmbeddingMatrix& concept_centers,
                         const std::vector<std::vector<std::string>>& words,
                         const std::vector<std::string>& ambiguous, double synonym_radius,
                         double token_radius)
    : seed_(seed), dim_(concept_centers.dim()), token_radius_(token_radius) {
  for (std::size_t c = 0; c < words.size(); ++c) {
    for (std::size_t j = 0; j < words[c].size(); ++j) {
      Rng rng(derive(seed_, "synonym:" + words[c][j]));
      concept_vocab_.emplace_back(words[c][j], j == 0 ? std::vector<float>(
                                                             concept_centers.row(c).begin(),
                                                             concept_centers.row(c).end())
                                                       : perturb(rng, concept_centers.row(c),
                                                                 synonym_radius));
    }
  }
  for (const auto& word : ambiguous) ambiguous_vocab_.emplace_back(word, hash_direction(word));
}

std::vector<float> TextEncoder::hash_direction(std::string_view token) const {
  Rng rng(derive(seed_, std::string("token:") + std::string(token)));
  return random_unit(rng, dim_);
}

std::vector<float> TextEncoder::embed(std::string_view text) const {
  const auto tokens = alpha_tokens(text);
  const auto find = [&](const auto& vocab) -> std::optional<std::size_t> {
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      for (const auto& [word, vec] : vocab) {
        if (word == tokens[t]) return t;
      }
    }
    return std::nullopt;
  };
  const auto lookup = [&](const auto& vocab, const std::string& word) {
    for (const auto& [w, vec] : vocab) {
      if (w == word) return vec;
    }
    return std::vector<float>{};
  };
  std::optional<std::size_t> head = find(concept_vocab_);
  std::vector<float> base;
  if (head) {
    base = lookup(concept_vocab_, tokens[*head]);
  } else if ((head = find(ambiguous_vocab_))) {
    base = lookup(ambiguous_vocab_, tokens[*head]);
  } else {
    base = hash_direction(text);
  }
  std::vector<double> acc(base.begin(), base.end());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (head && t == *head) continue;
    const auto d = hash_direction(tokens[t]);
    for (std::size_t j = 0; j < dim_; ++j) acc[j] += token_radius_ * d[j];
  }
  return to_unit(acc);
}

EmbeddingMatrix TextEncoder::embed_all(std::span<const std::string> texts) const {
  std::vector<float> data;
  data.reserve(texts.size() * dim_);
  for (const auto& t : texts) {
    const auto v = embed(t);
    data.insert(data.end(), v.begin(), v.end());
  }
  return EmbeddingMatrix::from_normalized(texts.size(), dim_, std::move(data));
}

// ---- ingest-directory worlds ---------------------------------------------------

namespace {

const std::vector<std::vector<std::string>> kConceptWords = {
    {"cat", "kitten", "feline"},     {"dog", "puppy", "hound"},
    {"car", "automobile", "sedan"},  {"tree", "oak", "pine"},
    {"road", "street", "highway"},   {"building", "tower", "house"},
    {"sky", "heaven", "firmament"},  {"person", "man", "pedestrian"},
    {"boat", "ship", "vessel"},      {"horse", "pony", "stallion"},
    {"field", "meadow", "pasture"},  {"water", "lake", "pond"},
    {"bird", "sparrow", "pigeon"},   {"chair", "seat", "stool"},
    {"table", "desk", "counter"},    {"bike", "bicycle", "cycle"},
};

const std::vector<std::string> kAmbiguousWords = {"background", "view", "area"};
const std::vector<std::string> kDeterminers = {"a", "the"};
const std::vector<std::string> kModifiers = {"", "small", "large", "red", "old", "white"};

std::string make_phrase(const std::string& det, const std::string& mod, const std::string& word) {
  return mod.empty() ? det + " " + word : det + " " + mod + " " + word;
}
std::string image_id(const char* prefix, std::size_t i) {
  std::string n = std::to_string(i);
  return std::string(prefix) + std::string(4 - std::min<std::size_t>(4, n.size()), '0') + n;
}

std::array<std::uint8_t, 3> palette(std::size_t c) {
  static constexpr std::uint8_t kLevels[3] = {30, 110, 190};
  const std::size_t idx = (c * 10) % 27;
  return {kLevels[idx / 9], kLevels[(idx / 3) % 3], kLevels[idx % 3]};
}

/// Patch features from a per-pixel concept raster: normalize(area-weighted
/// mix of visual centers + noise).
FeatureMap concept_features(Rng& rng, const std::vector<std::size_t>& concept_at,
                            std::size_t size, std::size_t grid, const EmbeddingMatrix& visual,
                            double noise) {
  const std::size_t cell = size / grid;
  FeatureMap f{grid, grid, visual.dim(), {}};
  f.data.reserve(grid * grid * visual.dim());
  for (std::size_t gy = 0; gy < grid; ++gy) {
    for (std::size_t gx = 0; gx < grid; ++gx) {
      std::vector<double> mix(visual.dim(), 0.0);
      for (std::size_t y = gy * cell; y < (gy + 1) * cell; ++y) {
        for (std::size_t x = gx * cell; x < (gx + 1) * cell; ++x) {
          const auto row = visual.row(concept_at[y * size + x]);
          for (std::size_t j = 0; j < mix.size(); ++j) mix[j] += row[j];
        }
      }
      const auto u = random_unit(rng, visual.dim());
      const double area = static_cast<double>(cell * cell);
      for (std::size_t j = 0; j < mix.size(); ++j) mix[j] = mix[j] / area + noise * u[j];
      const auto v = to_unit(mix);
      f.data.insert(f.data.end(), v.begin(), v.end());
    }
  }
  return f;
}

json manifest(const PipelineSpec& spec) {
  return {{"encoders", {{"visual", spec.visual_fingerprint}, {"text", spec.text_fingerprint}}},
          {"generator", {{"seed", spec.seed}, {"concepts", spec.concepts}}}};
}

io::TextTable templated_table(const TextEncoder& enc, const std::vector<std::string>& texts) {
  io::TextTable t;
  t.rows_per_text = kPromptTemplateCount;
  std::vector<std::string> all;
  for (const auto& text : texts) {
    const auto prompts = compose_prompts(text);
    t.texts.push_back(text);
    t.prompts.emplace_back(prompts.begin(), prompts.end());
    all.insert(all.end(), prompts.begin(), prompts.end());
  }
  t.embeddings = enc.embed_all(all);
  return t;
}

}  // namespace

std::vector<std::vector<std::string>> concept_words(std::size_t concepts) {
  require(concepts <= kConceptWords.size(),
          "at most " + std::to_string(kConceptWords.size()) + " named concepts");
  return {kConceptWords.begin(), kConceptWords.begin() + static_cast<std::ptrdiff_t>(concepts)};
}

std::vector<std::string> ambiguous_words() { return kAmbiguousWords; }

void PipelineSpec::validate() const {
  require(concepts >= 3 && concepts <= kConceptWords.size(), "concepts must lie in [3, 16]");
  require(concepts <= visual_dim && concepts <= pair_dim && concepts <= text_dim,
          "concepts must not exceed any embedding dim");
  require(min_segments >= 1 && min_segments <= max_segments && max_segments <= concepts,
          "segment counts must satisfy 1 <= min <= max <= concepts");
  require(ref_grid >= 1 && ref_size % ref_grid == 0 && ref_size >= 2 * max_segments,
          "ref_size must be a multiple of ref_grid and fit max_segments bands");
  require(test_grid >= 1 && test_blocks >= 1 && test_size % test_grid == 0 &&
              test_size % test_blocks == 0,
          "test_size must be a multiple of test_grid and test_blocks");
  require(hallucination >= 0.0 && hallucination <= 1.0, "hallucination must lie in [0, 1]");
  require(ambiguous_rates.size() <= kAmbiguousWords.size(), "too many ambiguous rates");
  for (double r : ambiguous_rates) require(r >= 0.0 && r <= 1.0, "rates must lie in [0, 1]");
  require(ref_images >= 1 && test_images >= 1, "need reference and test images");
  require(color_noise >= 0 && color_noise <= 40, "color noise must lie in [0, 40]");
}

void write_pipeline_world(const PipelineSpec& spec, const fs::path& out) {
  spec.validate();
  const auto words = concept_words(spec.concepts);
  const std::vector<std::string> ambiguous(
      kAmbiguousWords.begin(), kAmbiguousWords.begin() + static_cast<std::ptrdiff_t>(
                                                              spec.ambiguous_rates.size()));

  Rng center_rng(derive(spec.seed, "centers"));
  const EmbeddingMatrix visual = orthonormal_centers(center_rng, spec.concepts, spec.visual_dim);
  const EmbeddingMatrix pairing = orthonormal_centers(center_rng, spec.concepts, spec.pair_dim);
  const EmbeddingMatrix textual = orthonormal_centers(center_rng, spec.concepts, spec.text_dim);
  const TextEncoder pair_encoder(derive(spec.seed, "pair-encoder"), pairing, words, ambiguous,
                                 spec.synonym_radius, spec.token_radius);
  const TextEncoder text_encoder(derive(spec.seed, "text-encoder"), textual, words, ambiguous,
                                 spec.synonym_radius, spec.token_radius);
  const json man = manifest(spec);

  // reference images
  const fs::path ref = out / "ref";
  Rng rng(derive(spec.seed, "reference"));
  std::vector<json> index, descriptions, phrase_records;
  for (std::size_t i = 0; i < spec.ref_images; ++i) {
    const std::string id = image_id("ref", i);
    const std::size_t k =
        spec.min_segments + rng.below(spec.max_segments - spec.min_segments + 1);
    std::vector<std::size_t> order(spec.concepts);
    for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
    rng.shuffle(order);
    const std::vector<std::size_t> truth(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));

    // described concept: the confuser (c + 1) unless it is already described
    std::vector<std::size_t> described(truth);
    for (std::size_t s = 0; s < k; ++s) {
      if (rng.uniform() >= spec.hallucination) continue;
      const std::size_t confuser = (truth[s] + 1) % spec.concepts;
      if (std::find(described.begin(), described.end(), confuser) == described.end()) {
        described[s] = confuser;
      }
    }

    // horizontal bands with jittered boundaries
    std::vector<std::size_t> cuts{0};
    const std::size_t base = spec.ref_size / k;
    for (std::size_t s = 1; s < k; ++s) {
      const std::size_t jitter = base / 4;
      std::size_t c = s * spec.ref_size / k;
      if (jitter > 0) c = c - jitter + rng.below(2 * jitter + 1);
      cuts.push_back(std::max(c, cuts.back() + 1));
    }
    cuts.push_back(spec.ref_size);
    std::vector<std::uint32_t> ids(spec.ref_size * spec.ref_size);
    std::vector<std::size_t> concept_at(ids.size());
    for (std::size_t s = 0; s < k; ++s) {
      for (std::size_t y = cuts[s]; y < cuts[s + 1]; ++y) {
        for (std::size_t x = 0; x < spec.ref_size; ++x) {
          ids[y * spec.ref_size + x] = static_cast<std::uint32_t>(s);
          concept_at[y * spec.ref_size + x] = truth[s];
        }
      }
    }
    io::write_masks(ref / "masks" / (id + ".msk"),
                    SegmentMaskSet::partition(spec.ref_size, spec.ref_size, k, ids));
    io::write_feature_map(ref / "features" / (id + ".fmp"),
                          concept_features(rng, concept_at, spec.ref_size, spec.ref_grid, visual,
                                           spec.visual_noise));

    std::vector<float> seg_data;
    std::vector<std::string> phrases;
    for (std::size_t s = 0; s < k; ++s) {
      const auto v = perturb(rng, pairing.row(described[s]), spec.pair_noise);
      seg_data.insert(seg_data.end(), v.begin(), v.end());
      const auto& ws = words[described[s]];
      // main word 40%, synonyms 33% / 27%
      const double u = rng.uniform();
      const std::string& word = u < 0.40 ? ws[0] : (u < 0.73 ? ws[1] : ws[2]);
      phrases.push_back(make_phrase(kDeterminers[rng.below(kDeterminers.size())],
                                    kModifiers[rng.below(kModifiers.size())], word));
    }
    for (std::size_t a = 0; a < ambiguous.size(); ++a) {
      if (rng.uniform() < spec.ambiguous_rates[a]) {
        phrases.push_back(make_phrase(kDeterminers[rng.below(kDeterminers.size())], "",
                                      ambiguous[a]));
      }
    }
    io::write_embeddings(ref / "embeddings" / (id + ".segments.emb"),
                         EmbeddingMatrix::from_normalized(k, spec.pair_dim, std::move(seg_data)));
    io::TextTable phrase_table;
    phrase_table.texts = phrases;
    phrase_table.embeddings = pair_encoder.embed_all(phrases);
    io::write_text_table(ref / "embeddings" / (id + ".phrases"), phrase_table);

    std::string description = "There is ";
    for (std::size_t p = 0; p < phrases.size(); ++p) {
      if (p > 0) description += p + 1 == phrases.size() ? " and " : ", ";
      description += phrases[p];
    }
    description += ".";
    index.push_back({{"image_id", id}});
    descriptions.push_back({{"image_id", id}, {"description", description}});
    phrase_records.push_back({{"image_id", id}, {"phrases", phrases}});
  }
  io::write_jsonl(ref / "index.jsonl", index);
  io::write_jsonl(ref / "descriptions.jsonl", descriptions);
  io::write_jsonl(ref / "phrases.jsonl", phrase_records);
  io::write_json(ref / "manifest.json", man);

  // test images
  const fs::path test = out / "test";
  Rng trng(derive(spec.seed, "test"));
  index.clear();
  const std::size_t n = spec.test_size;
  const std::size_t block = n / spec.test_blocks;
  for (std::size_t i = 0; i < spec.test_images; ++i) {
    const std::string id = image_id("test", i);
    std::vector<std::size_t> block_concept(spec.test_blocks * spec.test_blocks);
    for (auto& c : block_concept) c = trng.below(spec.concepts);
    std::vector<std::size_t> concept_at(n * n);
    LabelRaster gt{n, n, spec.concepts, std::vector<std::uint32_t>(n * n)};
    ImageRaster img{n, n, 3, std::vector<std::uint8_t>(n * n * 3)};
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const std::size_t c = block_concept[(y / block) * spec.test_blocks + x / block];
        concept_at[y * n + x] = c;
        gt.ids[y * n + x] = static_cast<std::uint32_t>(c);
        const auto color = palette(c);
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const int jitter = static_cast<int>(trng.below(2 * spec.color_noise + 1)) -
                             spec.color_noise;
          img.samples[(y * n + x) * 3 + ch] =
              static_cast<std::uint8_t>(std::clamp(color[ch] + jitter, 0, 255));
        }
      }
    }
    io::write_png(test / "images" / (id + ".png"), img);
    io::write_label_raster(test / "gt" / (id + ".msk"), gt);
    io::write_feature_map(test / "features" / (id + ".fmp"),
                          concept_features(trng, concept_at, n, spec.test_grid, visual,
                                           spec.visual_noise));
    index.push_back({{"image_id", id}});
  }
  io::write_jsonl(test / "index.jsonl", index);
  io::write_json(test / "manifest.json", man);

  // text tables
  const fs::path text = out / "text";
  std::vector<std::string> roots, labels, classes;
  for (const auto& ws : words) {
    classes.push_back(ws[0]);
    roots.insert(roots.end(), ws.begin(), ws.end());
  }
  roots.insert(roots.end(), ambiguous.begin(), ambiguous.end());
  for (const auto& root : roots) {
    const bool vague = std::find(ambiguous.begin(), ambiguous.end(), root) != ambiguous.end();
    for (const auto& det : kDeterminers) {
      for (const auto& mod : kModifiers) {
        if (vague && !mod.empty()) continue;
        labels.push_back(make_phrase(det, mod, root));
      }
    }
  }
  io::TextTable root_table;
  root_table.texts = roots;
  root_table.embeddings = text_encoder.embed_all(roots);
  io::write_text_table(text / "roots", root_table);
  io::write_text_table(text / "labels", templated_table(text_encoder, labels));
  io::write_text_table(text / "classes", templated_table(text_encoder, classes));
  io::write_json(text / "manifest.json", man);
}

}  // namespace segref::synth
