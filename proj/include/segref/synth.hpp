#pragma once

// Deterministic synthetic worlds for oracle tests and end-to-end runs.
//
// Randomness comes from std::mt19937_64 (fully specified by the standard).
// Uniforms take the top 53 bits of one draw; normals are Irwin-Hall sums of
// twelve uniforms minus six. Only +, *, / and sqrt are used downstream, so a
// seed produces the same bytes on every IEEE-754 platform.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "segref/core/matrix.hpp"

namespace segref::synth {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// [0, 1)
  double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Approximately standard normal (bounded to [-6, 6]).
  double normal() noexcept;
  /// Uniform integer in [0, n), unbiased; n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

/// FNV-1a, for deriving per-string seeds.
std::uint64_t hash_string(std::string_view s) noexcept;

/// Uniformly random direction in R^d.
std::vector<float> random_unit(Rng& rng, std::size_t dim);

/// c rows of Gaussian vectors orthonormalized by modified Gram-Schmidt.
/// Throws InfeasibleSpec when c > d.
EmbeddingMatrix orthonormal_centers(Rng& rng, std::size_t count, std::size_t dim);

/// normalize(center + radius * u) for a random unit u; exactly `center` when
/// radius is 0.
std::vector<float> perturb(Rng& rng, std::span<const float> center, double radius);

struct SynthSpec {
  std::uint64_t seed = 0;
  std::size_t concepts = 8;
  std::size_t dim = 32;
  std::size_t samples_per_concept = 20;
  double noise = 0.1;          // intra-concept noise radius
  double misalignment = 0.0;   // fraction of each concept's samples labeled wrongly
  double margin = 0.5;         // min cos gap between own and any other center

  /// Throws InfeasibleSpec.
  void validate() const;
};

/// Samples labeled with a concept; planted outliers carry the label of one
/// concept and the embedding of another.
struct SynthWorld {
  EmbeddingMatrix centers;            // concepts x dim
  EmbeddingMatrix samples;            // (concepts * samples_per_concept) x dim
  std::vector<std::size_t> label;     // concept each sample is labeled with
  std::vector<std::size_t> truth;     // concept each sample was drawn from
  std::vector<std::size_t> outliers;  // ascending sample indices with label != truth
};

/// Sample s of concept a sits at row a * samples_per_concept + s. Each
/// concept gets round(misalignment * samples_per_concept) outliers drawn
/// from uniformly chosen other concepts. Every sample satisfies the margin
/// against its own (true) center.
SynthWorld generate(const SynthSpec& spec);

/// Cross-modal scores with per-label bias and per-sample noise; outliers are
/// shifted down by `outlier_shift` so the signal is present but weak.
struct ScoreNoise {
  double base = 0.3;
  double label_bias_sd = 0.1;
  double noise_sd = 0.05;
  double outlier_shift = 0.04;
};
std::vector<float> planted_cross_modal_scores(const SynthWorld& world, const ScoreNoise& noise,
                                              std::uint64_t seed);

// ---- ingest-directory worlds ---------------------------------------------

/// Stand-in text encoder over a closed vocabulary. A text embeds as the
/// vector of its first concept word (else its first ambiguous word, else a
/// hash direction), nudged by small hash directions of the remaining tokens.
class TextEncoder {
 public:
  TextEncoder(std::uint64_t seed, const EmbeddingMatrix& concept_centers,
              const std::vector<std::vector<std::string>>& concept_words,
              const std::vector<std::string>& ambiguous_words, double synonym_radius,
              double token_radius);

  std::vector<float> embed(std::string_view text) const;
  EmbeddingMatrix embed_all(std::span<const std::string> texts) const;
  std::size_t dim() const noexcept { return dim_; }

 private:
  std::vector<float> hash_direction(std::string_view token) const;

  std::uint64_t seed_;
  std::size_t dim_;
  std::vector<std::pair<std::string, std::vector<float>>> concept_vocab_;
  std::vector<std::pair<std::string, std::vector<float>>> ambiguous_vocab_;
  double token_radius_;
};

struct PipelineSpec {
  std::uint64_t seed = 0;
  std::size_t concepts = 12;
  std::size_t visual_dim = 32;
  std::size_t pair_dim = 32;
  std::size_t text_dim = 32;

  std::size_t ref_images = 160;
  std::size_t min_segments = 3;
  std::size_t max_segments = 6;
  std::size_t ref_size = 32;     // ref images are ref_size^2 pixels
  std::size_t ref_grid = 8;
  double hallucination = 0.3;    // segments described as their confuser concept
  std::vector<double> ambiguous_rates = {0.9, 0.6, 0.4};  // per ambiguous word

  std::size_t test_images = 12;
  std::size_t test_size = 64;
  std::size_t test_blocks = 4;   // test images are test_blocks^2 concept blocks
  std::size_t test_grid = 16;

  double visual_noise = 0.6;     // per feature patch
  double pair_noise = 0.3;
  double synonym_radius = 0.25;
  double token_radius = 0.05;
  int color_noise = 8;           // uniform +- per channel

  std::string visual_fingerprint = "synth-visual-v1";
  std::string text_fingerprint = "synth-text-v1";

  void validate() const;
};

/// Root words per concept: a main word followed by its synonyms.
std::vector<std::vector<std::string>> concept_words(std::size_t concepts);
std::vector<std::string> ambiguous_words();

/// Writes <out>/ref (reference ingest: masks, features, pairing embeddings,
/// phrases, descriptions), <out>/test (images, features, ground truth) and
/// <out>/text (roots, labels and classes tables).
void write_pipeline_world(const PipelineSpec& spec, const std::filesystem::path& out);

}  // namespace segref::synth
