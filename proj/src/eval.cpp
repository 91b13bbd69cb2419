#include "segref/eval.hpp"

#include <numeric>
#include <string>

namespace segref {

std::uint64_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::accumulate(const LabelRaster& pred, const LabelRaster& gt,
                                 std::uint32_t ignore_value) {
  if (pred.height != gt.height || pred.width != gt.width ||
      pred.ids.size() != gt.ids.size() || pred.ids.size() != pred.height * pred.width) {
    fail(ErrorCode::kShapeMismatch, "prediction " + std::to_string(pred.height) + "x" +
                                        std::to_string(pred.width) + " vs ground truth " +
                                        std::to_string(gt.height) + "x" +
                                        std::to_string(gt.width));
  }
  for (std::size_t p = 0; p < pred.ids.size(); ++p) {
    for (std::uint32_t id : {pred.ids[p], gt.ids[p]}) {
      if (id != ignore_value && id >= classes_) {
        fail(ErrorCode::kClassOutOfRange, "pixel " + std::to_string(p) + " has class " +
                                              std::to_string(id) + " >= " +
                                              std::to_string(classes_));
      }
    }
  }
  for (std::size_t p = 0; p < pred.ids.size(); ++p) {
    if (pred.ids[p] == ignore_value || gt.ids[p] == ignore_value) continue;
    ++counts_[static_cast<std::size_t>(gt.ids[p]) * classes_ + pred.ids[p]];
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) fail(ErrorCode::kShapeMismatch, "class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

IouResult miou(const ConfusionMatrix& conf) {
  const std::size_t c = conf.classes();
  IouResult result;
  result.per_class.resize(c);
  double sum = 0.0;
  std::size_t evaluated = 0;
  for (std::size_t j = 0; j < c; ++j) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t i = 0; i < c; ++i) {
      row += conf.at(j, i);
      col += conf.at(i, j);
    }
    const std::uint64_t tp = conf.at(j, j);
    const std::uint64_t denom = row + col - tp;  // TP + FN + FP
    if (denom == 0) continue;
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    result.per_class[j] = iou;
    sum += iou;
    ++evaluated;
  }
  if (evaluated == 0) fail(ErrorCode::kNoEvaluatedClasses, "no class has any pixels");
  result.miou = sum / static_cast<double>(evaluated);
  return result;
}

}  // namespace segref
