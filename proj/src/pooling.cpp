#include "segref/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "segref/core/kernels.hpp"
#include "segref/core/parallel.hpp"
#include "segref/core/simd.hpp"

namespace segref {

void FeatureMap::validate() const {
  if (data.size() != grid_h * grid_w * dim) {
    fail(ErrorCode::kShapeMismatch, "feature map data does not match grid_h*grid_w*dim");
  }
  for (float v : data) {
    if (!std::isfinite(v)) fail(ErrorCode::kNonFinite, "feature map has a non-finite value");
  }
}

namespace {

// Overlap lengths between pixel cells and patch cells along one axis, in
// units where a pixel has length `cells` and a patch has length `pixels`.
struct AxisOverlap {
  std::size_t first;                 // first patch the pixel touches
  std::vector<std::uint64_t> length; // overlap with patches first, first+1, ...
};

std::vector<AxisOverlap> axis_overlaps(std::size_t pixels, std::size_t cells) {
  std::vector<AxisOverlap> out(pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    const std::uint64_t lo = static_cast<std::uint64_t>(p) * cells;
    const std::uint64_t hi = lo + cells;
    const std::size_t g0 = static_cast<std::size_t>(lo / pixels);
    const std::size_t g1 = static_cast<std::size_t>((hi - 1) / pixels);
    out[p].first = g0;
    for (std::size_t g = g0; g <= g1; ++g) {
      const std::uint64_t plo = static_cast<std::uint64_t>(g) * pixels;
      const std::uint64_t phi = plo + pixels;
      out[p].length.push_back(std::min(hi, phi) - std::max(lo, plo));
    }
  }
  return out;
}

void check_grid(std::size_t height, std::size_t width, std::size_t grid_h, std::size_t grid_w) {
  if (grid_h == 0 || grid_w == 0) fail(ErrorCode::kInvalidArgument, "grid dims must be >= 1");
  if (height == 0 || width == 0) fail(ErrorCode::kShapeMismatch, "mask has zero extent");
}

}  // namespace

WeightGrid downscale_mask(std::span<const std::uint8_t> mask, std::size_t height,
                          std::size_t width, std::size_t grid_h, std::size_t grid_w) {
  check_grid(height, width, grid_h, grid_w);
  if (mask.size() != height * width) {
    fail(ErrorCode::kShapeMismatch, "mask size does not match height*width");
  }
  const auto ys = axis_overlaps(height, grid_h);
  const auto xs = axis_overlaps(width, grid_w);
  std::vector<std::uint64_t> covered(grid_h * grid_w, 0);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      if (mask[y * width + x] == 0) continue;
      for (std::size_t a = 0; a < ys[y].length.size(); ++a) {
        for (std::size_t b = 0; b < xs[x].length.size(); ++b) {
          covered[(ys[y].first + a) * grid_w + xs[x].first + b] +=
              ys[y].length[a] * xs[x].length[b];
        }
      }
    }
  }
  WeightGrid out{grid_h, grid_w, std::vector<double>(covered.size())};
  const double patch_area = static_cast<double>(height) * static_cast<double>(width);
  for (std::size_t i = 0; i < covered.size(); ++i) {
    out.weights[i] = static_cast<double>(covered[i]) / patch_area;
  }
  return out;
}

std::vector<float> mask_average_pool(const FeatureMap& features, const WeightGrid& weights) {
  if (weights.grid_h != features.grid_h || weights.grid_w != features.grid_w ||
      weights.weights.size() != features.grid_h * features.grid_w) {
    fail(ErrorCode::kShapeMismatch, "weight grid does not match the feature map grid");
  }
  const auto& k = simd::active();
  std::vector<double> acc(features.dim, 0.0);
  double total = 0.0;
  for (std::size_t g = 0; g < weights.weights.size(); ++g) {
    const double w = weights.weights[g];
    if (w == 0.0) continue;
    total += w;
    k.axpy(acc.data(), w, features.data.data() + g * features.dim, features.dim);
  }
  if (!(total > 1e-9)) fail(ErrorCode::kEmptyMask, "mask covers no feature patch");
  std::vector<float> out(features.dim);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = static_cast<float>(acc[j] / total);
  normalize_in_place(out, ErrorCode::kZeroMean);
  return out;
}

EmbeddingMatrix pool_segments(const FeatureMap& features, const SegmentMaskSet& masks) {
  check_grid(masks.height(), masks.width(), features.grid_h, features.grid_w);
  const std::size_t k = masks.size();
  const std::size_t cells = features.grid_h * features.grid_w;
  std::vector<WeightGrid> grids(k);

  if (masks.form() == SegmentMaskSet::Form::kPartition) {
    // one pass over the raster; same integer sums as per-mask downscaling
    const auto ys = axis_overlaps(masks.height(), features.grid_h);
    const auto xs = axis_overlaps(masks.width(), features.grid_w);
    std::vector<std::uint64_t> covered(k * cells, 0);
    for (std::size_t y = 0; y < masks.height(); ++y) {
      for (std::size_t x = 0; x < masks.width(); ++x) {
        const std::uint32_t id = masks.ids()[y * masks.width() + x];
        std::uint64_t* dst = covered.data() + static_cast<std::size_t>(id) * cells;
        for (std::size_t a = 0; a < ys[y].length.size(); ++a) {
          for (std::size_t b = 0; b < xs[x].length.size(); ++b) {
            dst[(ys[y].first + a) * features.grid_w + xs[x].first + b] +=
                ys[y].length[a] * xs[x].length[b];
          }
        }
      }
    }
    const double patch_area =
        static_cast<double>(masks.height()) * static_cast<double>(masks.width());
    for (std::size_t i = 0; i < k; ++i) {
      grids[i] = {features.grid_h, features.grid_w, std::vector<double>(cells)};
      for (std::size_t g = 0; g < cells; ++g) {
        grids[i].weights[g] = static_cast<double>(covered[i * cells + g]) / patch_area;
      }
    }
  } else {
    parallel::for_each_chunk(k, 4, [&](std::size_t i0, std::size_t i1) {
      for (std::size_t i = i0; i < i1; ++i) {
        grids[i] = downscale_mask(masks.mask(i), masks.height(), masks.width(),
                                  features.grid_h, features.grid_w);
      }
    });
  }

  std::vector<float> data(k * features.dim);
  parallel::for_each_chunk(k, 8, [&](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      try {
        const auto v = mask_average_pool(features, grids[i]);
        std::copy(v.begin(), v.end(), data.begin() + static_cast<std::ptrdiff_t>(i * features.dim));
      } catch (const Error& e) {
        throw Error(e.code(), "segment " + std::to_string(i) + ": " + e.message());
      }
    }
  });
  return EmbeddingMatrix::from_normalized(k, features.dim, std::move(data));
}

}  // namespace segref
