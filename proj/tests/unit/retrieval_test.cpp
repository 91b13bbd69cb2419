#include <cmath>
#include <random>
#include <vector>

#include "segref/core/parallel.hpp"
#include "segref/retrieval.hpp"
#include "support/instances.hpp"
#include "support/oracles.hpp"
#include "support/testing.hpp"

namespace segref {
namespace {

using testing::Entries;
using testing::Instance;
using testing::random_instance;

std::vector<LabelMeta> meta_for(std::size_t n) {
  std::vector<LabelMeta> out;
  for (std::size_t j = 0; j < n; ++j) out.push_back({j, "label " + std::to_string(j), "label", {}});
  return out;
}

ReferenceSet make_ref(EmbeddingMatrix segs, EmbeddingMatrix labels, const Entries& entries) {
  const std::size_t m = segs.rows(), n = labels.rows();
  return ReferenceSet::create(std::move(segs), std::move(labels),
                              SparseAssignment::from_sorted(m, n, entries), meta_for(n),
                              {"v", "t"});
}

EmbeddingMatrix unit(std::size_t rows, std::size_t dim, std::vector<float> data) {
  return EmbeddingMatrix::from_normalized(rows, dim, std::move(data));
}

TEST(SparseAssignment, ValidatesOrderAndRange) {
  EXPECT_SEGREF_ERROR(SparseAssignment::from_sorted(2, 2, Entries{{1, 0}, {0, 1}}), kMalformed);
  EXPECT_SEGREF_ERROR(SparseAssignment::from_sorted(2, 2, Entries{{0, 0}, {0, 0}}), kMalformed);
  EXPECT_SEGREF_ERROR(SparseAssignment::from_sorted(2, 2, Entries{{0, 2}}), kMalformed);
  const auto a = SparseAssignment::from_sorted(2, 3, Entries{{0, 0}, {0, 2}, {1, 1}});
  EXPECT_EQ(a.nnz(), 3u);
  EXPECT_EQ(std::vector<std::uint32_t>(a.row(0).begin(), a.row(0).end()),
            (std::vector<std::uint32_t>{0, 2}));
  EXPECT_EQ(a.entries(), (Entries{{0, 0}, {0, 2}, {1, 1}}));
}

TEST(ReferenceSet, RejectsOrphans) {
  const auto segs = unit(2, 1, {1, 1});
  const auto labels = unit(2, 1, {1, 1});
  EXPECT_SEGREF_ERROR(make_ref(segs, labels, {{0, 0}, {0, 1}}), kOrphanSegment);
  EXPECT_SEGREF_ERROR(make_ref(segs, labels, {{0, 0}, {1, 0}}), kOrphanLabel);
}

TEST(BuildReferenceSet, EncodesAssignments) {
  std::vector<PairRecord> pairs(3);
  pairs[0] = {"img", 0, "p0", "p", 0.5f, LabelSource::kPaired};
  pairs[1] = {"img", 0, "p1", "p", 0.5f, LabelSource::kPaired};
  pairs[2] = {"img", 1, "p1", "p", 0.5f, LabelSource::kSynonym};
  const std::vector<std::size_t> rows = {0, 0, 1};
  LabelEmbeddingTable table{{"p1", "p0"}, unit(2, 2, {0, 1, 1, 0})};
  const ReferenceSet ref =
      build_reference_set(pairs, rows, unit(2, 2, {1, 0, 0, 1}), table, {"v", "t"});
  EXPECT_EQ(ref.assignments().entries(), (Entries{{0, 0}, {0, 1}, {1, 1}}));
  EXPECT_EQ(ref.label_meta()[0].phrase, "p0");
  EXPECT_EQ(ref.label_meta()[1].phrase, "p1");
  EXPECT_EQ(ref.labels().row(0)[0], 1.0f);
  EXPECT_EQ(ref.fingerprints().visual, "v");
}

TEST(BuildReferenceSet, SinglePair) {
  std::vector<PairRecord> pairs = {{"img", 4, "a cat", "cat", 0.1f, LabelSource::kPaired}};
  const std::vector<std::size_t> rows = {0};
  LabelEmbeddingTable table{{"a cat"}, unit(1, 1, {1})};
  const ReferenceSet ref = build_reference_set(pairs, rows, unit(1, 1, {1}), table, {});
  EXPECT_EQ(ref.assignments().entries(), (Entries{{0, 0}}));
}

TEST(BuildReferenceSet, MissingLabelEmbedding) {
  std::vector<PairRecord> pairs = {{"img", 0, "a cat", "cat", 0.1f, LabelSource::kPaired}};
  const std::vector<std::size_t> rows = {0};
  LabelEmbeddingTable table{{"a dog"}, unit(1, 1, {1})};
  EXPECT_SEGREF_ERROR(build_reference_set(pairs, rows, unit(1, 1, {1}), table, {}),
                      kMissingEmbedding);
}

TEST(Prompts, FourVerbatimTemplates) {
  const auto p = compose_prompts("cat");
  ASSERT_EQ(p.size(), 4u);
  EXPECT_EQ(p[0], "A photo of cat,");
  EXPECT_EQ(p[1], "This is a photo of cat,");
  EXPECT_EQ(p[2], "There is cat in the scene,");
  EXPECT_EQ(p[3], "A photo of cat in the scene.");
  EXPECT_EQ(compose_prompts("traffic light")[2], "There is traffic light in the scene,");
  EXPECT_SEGREF_ERROR(compose_prompts(""), kInvalidArgument);
}

TEST(TemplateAverage, Cases) {
  EXPECT_EQ(average_template_embeddings(unit(3, 2, {0.6f, 0.8f, 0.6f, 0.8f, 0.6f, 0.8f})),
            (std::vector<float>{0.6f, 0.8f}));
  const auto half = average_template_embeddings(unit(2, 2, {1, 0, 0, 1}));
  EXPECT_NEAR(half[0], std::sqrt(0.5), 1e-7);
  EXPECT_NEAR(half[1], std::sqrt(0.5), 1e-7);
  EXPECT_SEGREF_ERROR(average_template_embeddings(unit(2, 1, {1, -1})), kZeroMean);

  std::mt19937_64 rng(4);
  const EmbeddingMatrix rows = testing::random_unit_rows(rng, 4, 6);
  std::vector<double> mean(6, 0.0);
  for (std::size_t p = 0; p < 4; ++p) {
    for (std::size_t j = 0; j < 6; ++j) mean[j] += rows.row(p)[j] / 4.0;
  }
  double norm = 0.0;
  for (double v : mean) norm += v * v;
  const auto got = average_template_embeddings(rows);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(got[j], mean[j] / std::sqrt(norm), 1e-6);
}

TEST(AffinityA1, SingleReferenceSegment) {
  const ReferenceSet ref = make_ref(unit(1, 2, {1, 0}), unit(2, 1, {1, 1}), {{0, 0}, {0, 1}});
  std::mt19937_64 rng(1);
  const Matrix a1 = affinity_a1(testing::random_unit_rows(rng, 3, 2), ref, {});
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_FLOAT_EQ(a1(i, 0), 1.0f);
    EXPECT_FLOAT_EQ(a1(i, 1), 1.0f);
  }
}

TEST(AffinityA1, EqualSimilaritySplitsEvenly) {
  const float s = std::sqrt(0.5f);
  const ReferenceSet ref = make_ref(unit(2, 2, {1, 0, 0, 1}), unit(2, 1, {1, 1}), {{0, 0}, {1, 1}});
  const Matrix a1 = affinity_a1(unit(1, 2, {s, s}), ref, {});
  EXPECT_NEAR(a1(0, 0), 0.5, 1e-7);
  EXPECT_NEAR(a1(0, 1), 0.5, 1e-7);
}

TEST(AffinityA1, TopKEqualToMIsBitwiseUntruncated) {
  std::mt19937_64 rng(2);
  const ReferenceSet ref = make_ref(testing::random_unit_rows(rng, 6, 3),
                                    testing::random_unit_rows(rng, 2, 3),
                                    {{0, 0}, {1, 1}, {2, 0}, {3, 1}, {4, 0}, {5, 1}});
  const EmbeddingMatrix test = testing::random_unit_rows(rng, 4, 3);
  RetrievalConfig cfg;
  cfg.temperature_a1 = 0.3;
  const Matrix base = affinity_a1(test, ref, cfg);
  cfg.top_k_candidates = 6;
  EXPECT_EQ(affinity_a1(test, ref, cfg), base);
  cfg.top_k_candidates = 0;
  EXPECT_SEGREF_ERROR(affinity_a1(test, ref, cfg), kInvalidArgument);
  cfg.top_k_candidates = 7;
  EXPECT_SEGREF_ERROR(affinity_a1(test, ref, cfg), kInvalidArgument);
}

TEST(AffinityA1, RowSumsMatchLabelMultiplicity) {
  std::mt19937_64 rng(3);
  const ReferenceSet single = make_ref(testing::random_unit_rows(rng, 3, 4),
                                       testing::random_unit_rows(rng, 3, 4),
                                       {{0, 2}, {1, 0}, {2, 1}});
  const EmbeddingMatrix test = testing::random_unit_rows(rng, 5, 4);
  const Matrix a1 = affinity_a1(test, single, {});
  for (std::size_t i = 0; i < 5; ++i) {
    double sum = 0.0;
    for (float v : a1.row(i)) {
      EXPECT_GE(v, 0.0f);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-5);
  }
  const ReferenceSet multi = make_ref(unit(2, 1, {1, 1}), testing::random_unit_rows(rng, 2, 4),
                                      {{0, 0}, {0, 1}, {1, 1}});
  const Matrix a1m = affinity_a1(unit(1, 1, {1}), multi, {});
  EXPECT_NEAR(a1m(0, 0) + a1m(0, 1), 1.5, 1e-6);
}

TEST(AffinityA1, DimMismatch) {
  const ReferenceSet ref = make_ref(unit(1, 2, {1, 0}), unit(1, 1, {1}), {{0, 0}});
  EXPECT_SEGREF_ERROR(affinity_a1(unit(1, 1, {1}), ref, {}), kDimMismatch);
}

TEST(AffinityA2, Cases) {
  const float s = std::sqrt(0.5f);
  const ReferenceSet ref = make_ref(unit(1, 1, {1}), unit(1, 2, {s, s}), {{0, 0}});
  const Matrix even = affinity_a2(ref, unit(2, 2, {1, 0, 0, 1}), {});
  EXPECT_NEAR(even(0, 0), 0.5, 1e-7);
  EXPECT_NEAR(even(0, 1), 0.5, 1e-7);
  const Matrix one = affinity_a2(ref, unit(1, 2, {1, 0}), {});
  EXPECT_FLOAT_EQ(one(0, 0), 1.0f);
  EXPECT_SEGREF_ERROR(affinity_a2(ref, unit(1, 1, {1}), {}), kDimMismatch);
}

TEST(AffinityA2, RowsSumToOne) {
  std::mt19937_64 rng(5);
  const ReferenceSet ref = make_ref(unit(1, 1, {1}), testing::random_unit_rows(rng, 4, 3),
                                    {{0, 0}, {0, 1}, {0, 2}, {0, 3}});
  const Matrix a2 = affinity_a2(ref, testing::random_unit_rows(rng, 3, 3), {});
  for (std::size_t j = 0; j < 4; ++j) {
    double sum = 0.0;
    for (float v : a2.row(j)) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(SegmentLogits, SelectionAndSums) {
  const Matrix p = segment_logits(Matrix(1, 2, {1, 0}), Matrix(2, 2, {0.3f, 0.7f, 0.5f, 0.5f}));
  EXPECT_FLOAT_EQ(p(0, 0), 0.3f);
  EXPECT_FLOAT_EQ(p(0, 1), 0.7f);
  const Matrix q = segment_logits(Matrix(1, 2, {0.25f, 0.5f}), Matrix(2, 3, {0.2f, 0.3f, 0.5f, 0.1f, 0.1f, 0.8f}));
  EXPECT_NEAR(q(0, 0) + q(0, 1) + q(0, 2), 0.75, 1e-5);
  EXPECT_SEGREF_ERROR(segment_logits(Matrix(1, 3), Matrix(2, 2)), kDimMismatch);
}

TEST(Aggregate, BroadcastDisjointAndOverlap) {
  const auto full = SegmentMaskSet::partition(2, 2, 1, {0, 0, 0, 0});
  const PredictionMap a = aggregate_pixels(Matrix(1, 2, {0.3f, 0.7f}), full);
  for (std::size_t p = 0; p < 4; ++p) {
    EXPECT_FLOAT_EQ(a.probabilities[p * 2], 0.3f);
    EXPECT_EQ(a.labels[p], 1u);
  }

  const auto halves = SegmentMaskSet::partition(1, 2, 2, {0, 1});
  const PredictionMap b = aggregate_pixels(Matrix(2, 2, {0.9f, 0.1f, 0.2f, 0.8f}), halves);
  EXPECT_EQ(b.labels, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_FLOAT_EQ(b.probabilities[3], 0.8f);

  const auto overlap = SegmentMaskSet::stack(1, 3, {{1, 1, 0}, {0, 1, 0}});
  const PredictionMap c = aggregate_pixels(Matrix(2, 2, {0.6f, 0.4f, 0.1f, 0.9f}), overlap);
  EXPECT_FLOAT_EQ(c.probabilities[2], 0.7f);
  EXPECT_FLOAT_EQ(c.probabilities[3], 1.3f);
  EXPECT_EQ(c.labels, (std::vector<std::uint32_t>{0, 1, kIgnoreLabel}));
  EXPECT_EQ(c.uncovered, (std::vector<std::uint8_t>{0, 0, 1}));
  EXPECT_EQ(c.label_raster().ids, c.labels);

  EXPECT_SEGREF_ERROR(aggregate_pixels(Matrix(1, 2), halves), kShapeMismatch);
}

TEST(Aggregate, TiesGoToLowestClass) {
  const auto full = SegmentMaskSet::partition(1, 1, 1, {0});
  EXPECT_EQ(aggregate_pixels(Matrix(1, 3, {0.2f, 0.4f, 0.4f}), full).labels[0], 1u);
}

TEST(Aggregate, ArgmaxInvariantToMonotoneRescaling) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> p(4 * 5);
  for (float& v : p) v = u(rng);
  const auto masks = SegmentMaskSet::partition(2, 2, 4, {0, 1, 2, 3});
  const PredictionMap base = aggregate_pixels(Matrix(4, 5, p), masks);
  std::vector<float> scaled = p;
  for (float& v : scaled) v = 3.0f * v + 1.0f;
  EXPECT_EQ(aggregate_pixels(Matrix(4, 5, scaled), masks).labels, base.labels);
}

TEST(Retrieve, MatchesNaiveOracle) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    Instance in = random_instance(rng);
    const ReferenceSet ref = make_ref(in.e_ref, in.e_lref, in.entries);
    RetrievalConfig cfg;
    cfg.temperature_a1 = 0.05 + 0.5 * (trial % 4);
    cfg.temperature_a2 = 0.1 + 0.3 * (trial % 3);
    std::size_t top_k = 0;
    if (trial % 2) {
      top_k = 1 + rng() % in.e_ref.rows();
      cfg.top_k_candidates = top_k;
    }
    const PredictionMap got = retrieve(ref, in.e_test, in.e_ltest, in.masks, cfg);
    const auto want = oracle::retrieval(in.s_test, in.s_ref, in.o_ref, in.l_ref, in.l_test,
                                        in.cover, cfg.temperature_a1, cfg.temperature_a2, top_k);
    const std::size_t c = in.e_ltest.rows();
    for (std::size_t p = 0; p < want.labels.size(); ++p) {
      for (std::size_t q = 0; q < c; ++q) {
        ASSERT_NEAR(got.probabilities[p * c + q], want.pixel_probs[p][q], 1e-5);
      }
    }
    EXPECT_EQ(got.labels, want.labels) << trial;
  }
}

TEST(Retrieve, ThreadCountDoesNotChangeOutput) {
  std::mt19937_64 rng(31);
  Instance in = random_instance(rng);
  const ReferenceSet ref = make_ref(in.e_ref, in.e_lref, in.entries);
  parallel::set_thread_count(1);
  const PredictionMap base = retrieve(ref, in.e_test, in.e_ltest, in.masks, {});
  for (std::size_t t : {4u, 8u}) {
    parallel::set_thread_count(t);
    const PredictionMap got = retrieve(ref, in.e_test, in.e_ltest, in.masks, {});
    EXPECT_EQ(got.probabilities, base.probabilities);
    EXPECT_EQ(got.labels, base.labels);
  }
  parallel::set_thread_count(1);
}

TEST(RetrievalConfig, LiteralDefaults) {
  const RetrievalConfig cfg;
  EXPECT_EQ(cfg.temperature_a1, 1.0);
  EXPECT_EQ(cfg.temperature_a2, 1.0);
  EXPECT_FALSE(cfg.top_k_candidates.has_value());
}

}  // namespace
}  // namespace segref
