#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "segref/masks.hpp"

namespace segref {

/// counts[gt * classes + pred] over pixels where neither side is ignored.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes)
      : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const noexcept { return classes_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const noexcept {
    return counts_[gt * classes_ + pred];
  }
  std::uint64_t total() const noexcept;

  /// Throws ShapeMismatch / ClassOutOfRange; the matrix is unchanged on error.
  void accumulate(const LabelRaster& pred, const LabelRaster& gt,
                  std::uint32_t ignore_value = kIgnoreLabel);

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct IouResult {
  double miou = 0.0;
  std::vector<std::optional<double>> per_class;  // nullopt: absent everywhere
};

/// IoU_j = TP / (TP + FP + FN); classes with a zero denominator are left
/// out of the mean. Throws NoEvaluatedClasses if none remain.
IouResult miou(const ConfusionMatrix& conf);

}  // namespace segref
