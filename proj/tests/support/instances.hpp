#pragma once

// Random retrieval instances with their dense oracle inputs.

#include <random>
#include <utility>
#include <vector>

#include "segref/masks.hpp"
#include "segref/retrieval.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace segref::testing {

using Entries = std::vector<std::pair<std::uint64_t, std::uint64_t>>;

/// k <= 8 test segments over an h x w image, m <= 64 reference segments,
/// n <= 16 labels, c <= 5 classes, dims <= 8. Every O_ref row and column is
/// nonempty and every mask covers at least one pixel.
struct Instance {
  oracle::Dense s_test, s_ref, l_ref, l_test;
  std::vector<std::vector<int>> o_ref, cover;
  EmbeddingMatrix e_test, e_ref, e_lref, e_ltest;
  Entries entries;
  SegmentMaskSet masks;
};

inline Instance random_instance(std::mt19937_64& rng) {
  Instance in;
  const std::size_t k = 1 + rng() % 8, m = 1 + rng() % 64, n = 1 + rng() % 16,
                    c = 1 + rng() % 5, d = 1 + rng() % 8, d2 = 1 + rng() % 8;
  const std::size_t h = 2 + rng() % 5, w = 2 + rng() % 5;
  in.e_test = random_unit_rows(rng, k, d);
  in.e_ref = random_unit_rows(rng, m, d);
  in.e_lref = random_unit_rows(rng, n, d2);
  in.e_ltest = random_unit_rows(rng, c, d2);
  in.o_ref.assign(m, std::vector<int>(n, 0));
  for (std::size_t r = 0; r < m; ++r) in.o_ref[r][r % n] = 1;
  for (std::size_t j = 0; j < n; ++j) in.o_ref[j % m][j] = 1;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      if (rng() % 5 == 0) in.o_ref[r][j] = 1;
      if (in.o_ref[r][j]) in.entries.emplace_back(r, j);
    }
  }
  std::vector<std::vector<std::uint8_t>> stack(k, std::vector<std::uint8_t>(h * w, 0));
  for (std::size_t i = 0; i < k; ++i) {
    stack[i][rng() % (h * w)] = 1;
    for (auto& b : stack[i]) {
      if (rng() % 3 == 0) b = 1;
    }
  }
  in.masks = SegmentMaskSet::stack(h, w, stack);
  in.cover.assign(k, std::vector<int>(h * w));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t p = 0; p < h * w; ++p) in.cover[i][p] = stack[i][p];
  }
  in.s_test = oracle::to_dense(in.e_test);
  in.s_ref = oracle::to_dense(in.e_ref);
  in.l_ref = oracle::to_dense(in.e_lref);
  in.l_test = oracle::to_dense(in.e_ltest);
  return in;
}

inline ReferenceSet instance_ref(const Instance& in) {
  std::vector<LabelMeta> meta;
  for (std::size_t j = 0; j < in.e_lref.rows(); ++j) {
    meta.push_back({j, "label " + std::to_string(j), "label", LabelSource::kPaired});
  }
  return ReferenceSet::create(in.e_ref, in.e_lref,
                              SparseAssignment::from_sorted(in.e_ref.rows(), in.e_lref.rows(),
                                                            in.entries),
                              std::move(meta), {"v", "t"});
}

}  // namespace segref::testing
