#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <vector>

#include "segref/core/kernels.hpp"
#include "segref/core/parallel.hpp"
#include "segref/core/simd.hpp"
#include "support/testing.hpp"

namespace segref {
namespace {

double row_norm(std::span<const float> r) {
  double s = 0.0;
  for (float v : r) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

TEST(L2Normalize, ThreeFourFiveStyleRow) {
  EmbeddingMatrix m(1, 3, {1.0f, 2.0f, 2.0f});
  const EmbeddingMatrix n = l2_normalize(m);
  EXPECT_TRUE(n.normalized());
  EXPECT_FLOAT_EQ(n.row(0)[0], 1.0f / 3.0f);
  EXPECT_FLOAT_EQ(n.row(0)[1], 2.0f / 3.0f);
  EXPECT_FLOAT_EQ(n.row(0)[2], 2.0f / 3.0f);
}

TEST(L2Normalize, UnitRowUnchanged) {
  EmbeddingMatrix m(1, 2, {0.6f, 0.8f});
  const EmbeddingMatrix n = l2_normalize(m);
  EXPECT_FLOAT_EQ(n.row(0)[0], 0.6f);
  EXPECT_FLOAT_EQ(n.row(0)[1], 0.8f);
}

TEST(L2Normalize, RandomRowsHaveUnitNorm) {
  std::mt19937_64 rng(7);
  const EmbeddingMatrix n = l2_normalize(EmbeddingMatrix(5, 8, testing::gaussian_values(rng, 40)));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(row_norm(n.row(i)), 1.0, 1e-6);
}

TEST(L2Normalize, ZeroRowRejected) {
  EmbeddingMatrix m(2, 2, {1.0f, 0.0f, 0.0f, 0.0f});
  EXPECT_SEGREF_ERROR(l2_normalize(m), kZeroRow);
}

TEST(EmbeddingMatrix, ShapeAndNormChecks) {
  EXPECT_SEGREF_ERROR(EmbeddingMatrix(2, 2, std::vector<float>(3)), kShapeMismatch);
  EXPECT_SEGREF_ERROR(EmbeddingMatrix::from_normalized(1, 2, {1.0f, 1.0f}), kNotNormalized);
  EXPECT_TRUE(EmbeddingMatrix::from_normalized(1, 2, {0.0f, 1.0f}).normalized());
}

TEST(EmbeddingMatrix, SelectRowsKeepsFlag) {
  std::mt19937_64 rng(1);
  const EmbeddingMatrix m = testing::random_unit_rows(rng, 4, 3);
  const std::vector<std::size_t> idx = {3, 1};
  const EmbeddingMatrix s = m.select_rows(idx);
  EXPECT_TRUE(s.normalized());
  ASSERT_EQ(s.rows(), 2u);
  EXPECT_TRUE(std::ranges::equal(s.row(0), m.row(3)));
  EXPECT_TRUE(std::ranges::equal(s.row(1), m.row(1)));
}

TEST(CosineSim, SelfAndOrthogonal) {
  const EmbeddingMatrix a = EmbeddingMatrix::from_normalized(2, 2, {1, 0, 0, 1});
  const SimilarityMatrix s = cosine_sim(a, a);
  EXPECT_NEAR(s(0, 0), 1.0, 1e-6);
  EXPECT_NEAR(s(1, 1), 1.0, 1e-6);
  EXPECT_NEAR(s(0, 1), 0.0, 1e-6);
}

TEST(CosineSim, MatchesNaiveLoop) {
  std::mt19937_64 rng(3);
  const EmbeddingMatrix a = testing::random_unit_rows(rng, 3, 4);
  const EmbeddingMatrix b = testing::random_unit_rows(rng, 2, 4);
  const SimilarityMatrix s = cosine_sim(a, b);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double d = 0.0;
      for (std::size_t t = 0; t < 4; ++t) d += static_cast<double>(a.row(i)[t]) * b.row(j)[t];
      EXPECT_NEAR(s(i, j), d, 1e-6);
    }
  }
}

TEST(CosineSim, UnitDiagonalAndBoundedEntries) {
  std::mt19937_64 rng(11);
  const EmbeddingMatrix x = testing::random_unit_rows(rng, 40, 17);
  const SimilarityMatrix s = cosine_sim(x, x);
  for (std::size_t i = 0; i < 40; ++i) {
    EXPECT_NEAR(s(i, i), 1.0, 1e-6);
    for (std::size_t j = 0; j < 40; ++j) {
      EXPECT_LE(std::abs(s(i, j)), 1.0 + 1e-5);
    }
  }
}

TEST(CosineSim, ErrorsOnDimOrNormalization) {
  std::mt19937_64 rng(2);
  const EmbeddingMatrix a = testing::random_unit_rows(rng, 2, 3);
  const EmbeddingMatrix b = testing::random_unit_rows(rng, 2, 4);
  EXPECT_SEGREF_ERROR(cosine_sim(a, b), kDimMismatch);
  EXPECT_SEGREF_ERROR(cosine_sim(a, EmbeddingMatrix(2, 3, std::vector<float>(6, 1.0f))),
                      kNotNormalized);
}

TEST(CosineSim, BitIdenticalAcrossThreadCounts) {
  std::mt19937_64 rng(5);
  const EmbeddingMatrix a = testing::random_unit_rows(rng, 300, 33);
  const EmbeddingMatrix b = testing::random_unit_rows(rng, 257, 33);
  parallel::set_thread_count(1);
  const SimilarityMatrix base = cosine_sim(a, b);
  for (std::size_t t : {2u, 4u, 8u}) {
    parallel::set_thread_count(t);
    EXPECT_EQ(cosine_sim(a, b), base) << t << " threads";
  }
  parallel::set_thread_count(1);
}

TEST(Softmax, AnalyticCases) {
  SimilarityMatrix s(2, 2);
  s(1, 0) = static_cast<float>(std::log(2.0));
  const SimilarityMatrix p = softmax_rows(s, 1.0);
  EXPECT_NEAR(p(0, 0), 0.5, 1e-7);
  EXPECT_NEAR(p(0, 1), 0.5, 1e-7);
  EXPECT_NEAR(p(1, 0), 2.0 / 3.0, 1e-7);
  EXPECT_NEAR(p(1, 1), 1.0 / 3.0, 1e-7);
}

TEST(Softmax, TemperatureMatchesLongDoubleOracle) {
  SimilarityMatrix s(1, 2);
  s(0, 0) = 1.0f;
  const SimilarityMatrix p = softmax_rows(s, 0.5);
  const long double e = std::exp(2.0L);
  const long double want0 = e / (e + 1.0L), want1 = 1.0L / (e + 1.0L);
  EXPECT_LT(std::abs(p(0, 0) - want0) / want0, 1e-6);
  EXPECT_LT(std::abs(p(0, 1) - want1) / want1, 1e-6);
}

TEST(Softmax, RowsSumToOneAndEntriesPositive) {
  std::mt19937_64 rng(9);
  const SimilarityMatrix s =
      cosine_sim(testing::random_unit_rows(rng, 20, 6), testing::random_unit_rows(rng, 13, 6));
  for (double tau : {0.05, 1.0, 3.0}) {
    const SimilarityMatrix p = softmax_rows(s, tau);
    for (std::size_t i = 0; i < 20; ++i) {
      double sum = 0.0;
      for (float v : p.row(i)) {
        EXPECT_GT(v, 0.0f);
        EXPECT_LE(v, 1.0f);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
  }
}

TEST(Softmax, MaskedEntriesGetZero) {
  SimilarityMatrix s(1, 3);
  s(0, 1) = -std::numeric_limits<float>::infinity();
  const SimilarityMatrix p = softmax_rows(s, 1.0);
  EXPECT_EQ(p(0, 1), 0.0f);
  EXPECT_NEAR(p(0, 0), 0.5, 1e-7);
}

TEST(Softmax, RejectsNonPositiveTemperature) {
  SimilarityMatrix s(1, 1);
  EXPECT_SEGREF_ERROR(softmax_rows(s, 0.0), kNonPositiveTemperature);
  EXPECT_SEGREF_ERROR(softmax_rows(s, -1.0), kNonPositiveTemperature);
}

TEST(Matmul, MatchesHandProduct) {
  Matrix a(2, 3, {1, 2, 3, 4, 5, 6});
  Matrix b(3, 2, {7, 8, 9, 10, 11, 12});
  const Matrix c = matmul(a, b);
  EXPECT_EQ(c, Matrix(2, 2, {58, 64, 139, 154}));
  EXPECT_SEGREF_ERROR(matmul(a, a), kDimMismatch);
}

TEST(Median, HandCase) {
  EmbeddingMatrix rows(3, 2, {0, 1, 1, 0, 1, 1});
  const std::vector<float> m = coordinatewise_median(rows);
  EXPECT_NEAR(m[0], std::sqrt(0.5), 1e-7);
  EXPECT_NEAR(m[1], std::sqrt(0.5), 1e-7);
}

TEST(Median, SingleRowIsThatRow) {
  const EmbeddingMatrix rows = EmbeddingMatrix::from_normalized(1, 2, {0.6f, 0.8f});
  EXPECT_EQ(coordinatewise_median(rows), (std::vector<float>{0.6f, 0.8f}));
}

TEST(Median, MatchesSortOracleAndIsPermutationInvariant) {
  std::mt19937_64 rng(13);
  for (std::size_t count : {7u, 8u}) {
    const EmbeddingMatrix rows = testing::random_unit_rows(rng, count, 5);
    std::vector<double> want(5);
    for (std::size_t j = 0; j < 5; ++j) {
      std::vector<double> col;
      for (std::size_t i = 0; i < count; ++i) col.push_back(rows.row(i)[j]);
      std::sort(col.begin(), col.end());
      want[j] = count % 2 ? col[count / 2] : 0.5 * (col[count / 2 - 1] + col[count / 2]);
    }
    double norm = 0.0;
    for (double v : want) norm += v * v;
    norm = std::sqrt(norm);
    const std::vector<float> got = coordinatewise_median(rows);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(got[j], want[j] / norm, 1e-6);

    std::vector<std::size_t> perm(count);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    EXPECT_EQ(coordinatewise_median(rows.select_rows(perm)), got);
  }
}

TEST(Median, Errors) {
  EXPECT_SEGREF_ERROR(coordinatewise_median(EmbeddingMatrix(0, 2)), kEmptyInput);
  EmbeddingMatrix opposed(2, 2, {1, 0, -1, 0});
  EXPECT_SEGREF_ERROR(coordinatewise_median(opposed), kZeroMedian);
}

TEST(Medoid, PicksMostCentralRow) {
  const float s = std::sqrt(0.5f);
  const EmbeddingMatrix rows = EmbeddingMatrix::from_normalized(3, 2, {1, 0, s, s, 0, 1});
  EXPECT_EQ(medoid(rows), (std::vector<float>{s, s}));
  EXPECT_EQ(group_center(rows, CenterStrategy::kMedoid), (std::vector<float>{s, s}));
}

TEST(Simd, ScalarTableAlwaysAvailable) {
  EXPECT_EQ(simd::scalar_kernels().isa, simd::Isa::kScalar);
  EXPECT_TRUE(simd::set_isa(simd::Isa::kScalar));
  EXPECT_EQ(simd::active().isa, simd::Isa::kScalar);
  EXPECT_EQ(simd::isa_name(simd::Isa::kAvx2), "avx2");
  if (simd::avx2_kernels()) {
    EXPECT_TRUE(simd::set_isa(simd::Isa::kAvx2));
  }
}

class Avx2Equivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    avx2_ = simd::avx2_kernels();
    if (!avx2_) {
      GTEST_SKIP() << "AVX2 not available on this machine";
    }
  }
  const simd::KernelTable* avx2_ = nullptr;
};

TEST_F(Avx2Equivalence, DotWithinSummationReorderBound) {
  std::mt19937_64 rng(17);
  const auto& scalar = simd::scalar_kernels();
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 33u, 100u, 1023u}) {
    const auto a = testing::gaussian_values(rng, n);
    const auto b = testing::gaussian_values(rng, n);
    const double x = scalar.dot(a.data(), b.data(), n);
    const double y = avx2_->dot(a.data(), b.data(), n);
    double mag = 0.0;
    for (std::size_t i = 0; i < n; ++i) mag += std::abs(static_cast<double>(a[i]) * b[i]);
    EXPECT_LE(std::abs(x - y), 1e-14 * (mag + 1.0)) << n;
  }
}

TEST_F(Avx2Equivalence, AxpyAndNarrowBitIdentical) {
  std::mt19937_64 rng(19);
  const auto& scalar = simd::scalar_kernels();
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 17u, 64u, 999u}) {
    const auto x = testing::gaussian_values(rng, n);
    std::vector<double> y1(n), y2;
    for (std::size_t i = 0; i < n; ++i) y1[i] = static_cast<double>(x[i]) * 0.37 - 1.5;
    y2 = y1;
    scalar.axpy(y1.data(), 0.123456789, x.data(), n);
    avx2_->axpy(y2.data(), 0.123456789, x.data(), n);
    EXPECT_EQ(y1, y2) << n;

    std::vector<float> f1(n), f2(n);
    scalar.narrow(f1.data(), y1.data(), n);
    avx2_->narrow(f2.data(), y1.data(), n);
    EXPECT_EQ(f1, f2) << n;
  }
}

TEST_F(Avx2Equivalence, KernelsAgreeAcrossIsa) {
  std::mt19937_64 rng(23);
  const EmbeddingMatrix a = testing::random_unit_rows(rng, 20, 37);
  const EmbeddingMatrix b = testing::random_unit_rows(rng, 30, 37);
  ASSERT_TRUE(simd::set_isa(simd::Isa::kScalar));
  const SimilarityMatrix s1 = cosine_sim(a, b);
  const std::vector<float> m1 = coordinatewise_median(a);
  ASSERT_TRUE(simd::set_isa(simd::Isa::kAvx2));
  const SimilarityMatrix s2 = cosine_sim(a, b);
  const std::vector<float> m2 = coordinatewise_median(a);
  for (std::size_t i = 0; i < s1.values().size(); ++i) {
    EXPECT_NEAR(s1.values()[i], s2.values()[i], 1e-6);
  }
  EXPECT_EQ(m1, m2);
}

TEST(Parallel, CoversRangeExactlyOnce) {
  for (std::size_t t : {1u, 3u, 8u}) {
    parallel::set_thread_count(t);
    std::vector<std::atomic<int>> hits(1001);
    parallel::for_each_chunk(hits.size(), 7, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) hits[i]++;
    });
    for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
  parallel::set_thread_count(1);
}

TEST(Parallel, ChunkBoundariesIndependentOfThreads) {
  auto boundaries = [](std::size_t t) {
    parallel::set_thread_count(t);
    std::mutex mu;
    std::vector<std::pair<std::size_t, std::size_t>> out;
    parallel::for_each_chunk(500, 13, [&](std::size_t b, std::size_t e) {
      std::lock_guard<std::mutex> lock(mu);
      out.emplace_back(b, e);
    });
    std::sort(out.begin(), out.end());
    return out;
  };
  const auto one = boundaries(1);
  EXPECT_EQ(boundaries(4), one);
  EXPECT_EQ(boundaries(8), one);
  parallel::set_thread_count(1);
}

TEST(Parallel, RethrowsLowestFailingChunk) {
  parallel::set_thread_count(4);
  try {
    parallel::for_each_chunk(100, 10, [](std::size_t b, std::size_t) {
      if (b >= 30) fail(ErrorCode::kInvalidArgument, "chunk " + std::to_string(b));
    });
    ADD_FAILURE() << "no exception";
  } catch (const Error& e) {
    EXPECT_EQ(e.message(), "chunk 30");
  }
  parallel::set_thread_count(1);
}

TEST(Parallel, NestedCallsRunInline) {
  parallel::set_thread_count(4);
  std::atomic<int> total{0};
  parallel::for_each_chunk(8, 1, [&](std::size_t, std::size_t) {
    parallel::for_each_chunk(10, 1, [&](std::size_t b, std::size_t e) {
      total += static_cast<int>(e - b);
    });
  });
  EXPECT_EQ(total.load(), 80);
  parallel::set_thread_count(1);
}

}  // namespace
}  // namespace segref
