#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "segref/masks.hpp"

namespace segref {

/// 8-bit image, interleaved channels (1 = gray, 3 = RGB).
struct ImageRaster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> samples;

  void validate() const;
  bool operator==(const ImageRaster&) const = default;
};

/// Float-sample image produced by smoothing.
struct FloatImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> samples;

  float at(std::size_t y, std::size_t x, std::size_t ch) const noexcept {
    return samples[(y * width + x) * channels + ch];
  }
};

/// The normalized sampled Gaussian used by gaussian_smooth: radius
/// ceil(4 sigma), weights exp(-x^2 / (2 sigma^2)) summing to 1.
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur per channel, replicated borders. sigma = 0 copies
/// the samples unchanged.
FloatImage gaussian_smooth(const ImageRaster& img, double sigma);

struct FelzenszwalbParams {
  double scale = 500.0;
  double sigma = 0.8;
  std::size_t min_size = 20;
};

/// Graph-based segmentation over the 8-connected pixel grid with Euclidean
/// color weights on the smoothed image. Returns a partition whose ids are
/// numbered by first occurrence in raster scan order.
SegmentMaskSet felzenszwalb_segment(const ImageRaster& img, const FelzenszwalbParams& params);

}  // namespace segref
