#include "segref/masks.hpp"

#include <string>

namespace segref {

void LabelRaster::validate() const {
  if (ids.size() != height * width) {
    fail(ErrorCode::kShapeMismatch, "raster has " + std::to_string(ids.size()) +
                                        " ids for " + std::to_string(height) + "x" +
                                        std::to_string(width));
  }
  for (std::size_t p = 0; p < ids.size(); ++p) {
    if (ids[p] != kIgnoreLabel && ids[p] >= classes) {
      fail(ErrorCode::kClassOutOfRange, "pixel " + std::to_string(p) + " has id " +
                                            std::to_string(ids[p]) + " >= k=" +
                                            std::to_string(classes));
    }
  }
}

SegmentMaskSet SegmentMaskSet::partition(std::size_t height, std::size_t width, std::size_t k,
                                         std::vector<std::uint32_t> ids) {
  if (ids.size() != height * width) {
    fail(ErrorCode::kShapeMismatch, "partition size does not match height*width");
  }
  if (k > ids.size()) {
    fail(ErrorCode::kEmptyMask, std::to_string(k) + " segments cannot all be nonempty in " +
                                    std::to_string(ids.size()) + " pixels");
  }
  std::vector<bool> seen(k, false);
  for (std::uint32_t id : ids) {
    if (id >= k) {
      fail(ErrorCode::kClassOutOfRange,
           "partition id " + std::to_string(id) + " outside [0, " + std::to_string(k) + ")");
    }
    seen[id] = true;
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (!seen[i]) fail(ErrorCode::kEmptyMask, "segment " + std::to_string(i) + " is empty");
  }
  SegmentMaskSet s;
  s.form_ = Form::kPartition;
  s.height_ = height;
  s.width_ = width;
  s.count_ = k;
  s.ids_ = std::move(ids);
  return s;
}

SegmentMaskSet SegmentMaskSet::partition(const LabelRaster& raster) {
  return partition(raster.height, raster.width, raster.classes, raster.ids);
}

SegmentMaskSet SegmentMaskSet::stack(std::size_t height, std::size_t width,
                                     std::vector<std::vector<std::uint8_t>> masks) {
  SegmentMaskSet s;
  s.form_ = Form::kStack;
  s.height_ = height;
  s.width_ = width;
  s.count_ = masks.size();
  s.stack_.reserve(masks.size() * height * width);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (masks[i].size() != height * width) {
      fail(ErrorCode::kShapeMismatch, "mask " + std::to_string(i) + " has wrong size");
    }
    bool any = false;
    for (std::uint8_t v : masks[i]) {
      s.stack_.push_back(v != 0 ? 1 : 0);
      any = any || v != 0;
    }
    if (!any) fail(ErrorCode::kEmptyMask, "mask " + std::to_string(i) + " is empty");
  }
  return s;
}

std::vector<std::uint8_t> SegmentMaskSet::mask(std::size_t i) const {
  std::vector<std::uint8_t> out(pixels());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = covers(i, p) ? 1 : 0;
  return out;
}

}  // namespace segref
