#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "segref/core/matrix.hpp"
#include "segref/masks.hpp"

namespace segref {

/// Dense grid_h x grid_w x dim patch features from a visual encoder.
struct FeatureMap {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t dim = 0;
  std::vector<float> data;  // (gy * grid_w + gx) * dim + j

  std::span<const float> patch(std::size_t gy, std::size_t gx) const noexcept {
    return {data.data() + (gy * grid_w + gx) * dim, dim};
  }
  void validate() const;
  bool operator==(const FeatureMap&) const = default;
};

/// grid_h x grid_w patch weights, row-major.
struct WeightGrid {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::vector<double> weights;
};

/// Fraction of each patch's area covered by the mask, treating pixels and
/// patches as exact rectangles on the image plane (handles sizes that do not
/// divide evenly).
WeightGrid downscale_mask(std::span<const std::uint8_t> mask, std::size_t height,
                          std::size_t width, std::size_t grid_h, std::size_t grid_w);

/// sum(w * feature) / sum(w), L2-normalized. Throws EmptyMask when
/// sum(w) <= 1e-9.
std::vector<float> mask_average_pool(const FeatureMap& features, const WeightGrid& weights);

/// One pooled, normalized embedding per mask (k x dim).
EmbeddingMatrix pool_segments(const FeatureMap& features, const SegmentMaskSet& masks);

}  // namespace segref
