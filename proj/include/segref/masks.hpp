#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "segref/error.hpp"

namespace segref {

/// Sentinel for "no class" in label rasters: the largest representable id.
inline constexpr std::uint32_t kIgnoreLabel = 0xFFFFFFFFu;

/// h x w raster of ids in [0, k) or kIgnoreLabel. Used for ground truth,
/// predictions, and partition-form segment masks on disk.
struct LabelRaster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t classes = 0;  // k: ids must be < classes or kIgnoreLabel
  std::vector<std::uint32_t> ids;

  /// Throws ShapeMismatch / ClassOutOfRange.
  void validate() const;
  bool operator==(const LabelRaster&) const = default;
};

/// k class-agnostic binary masks over an h x w raster, either as a
/// partition (one id per pixel) or as a stack of possibly overlapping masks.
class SegmentMaskSet {
 public:
  enum class Form { kPartition, kStack };

  SegmentMaskSet() = default;

  /// Every pixel carries an id < k and every id occurs at least once.
  static SegmentMaskSet partition(std::size_t height, std::size_t width, std::size_t k,
                                  std::vector<std::uint32_t> ids);
  static SegmentMaskSet partition(const LabelRaster& raster);

  /// masks[i] holds height*width bytes, nonzero = covered. Each mask must be
  /// nonempty.
  static SegmentMaskSet stack(std::size_t height, std::size_t width,
                              std::vector<std::vector<std::uint8_t>> masks);

  Form form() const noexcept { return form_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return count_; }
  std::size_t pixels() const noexcept { return height_ * width_; }

  /// Partition ids; empty for stack form.
  std::span<const std::uint32_t> ids() const noexcept { return ids_; }

  bool covers(std::size_t mask, std::size_t pixel) const noexcept {
    return form_ == Form::kPartition ? ids_[pixel] == mask
                                     : stack_[mask * pixels() + pixel] != 0;
  }

  /// Binary mask i (1 = covered), height*width bytes.
  std::vector<std::uint8_t> mask(std::size_t i) const;

  bool operator==(const SegmentMaskSet&) const = default;

 private:
  Form form_ = Form::kPartition;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t count_ = 0;
  std::vector<std::uint32_t> ids_;
  std::vector<std::uint8_t> stack_;  // count_ x pixels
};

}  // namespace segref
