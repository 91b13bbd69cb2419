#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace segref {

enum class ErrorCode {
  kInvalidArgument,
  kZeroRow,
  kNotNormalized,
  kDimMismatch,
  kShapeMismatch,
  kNonPositiveTemperature,
  kEmptyInput,
  kZeroMedian,
  kZeroMean,
  kNoRoot,
  kTooFewGroups,
  kMissingCrossModalScores,
  kMissingEmbedding,
  kOrphanSegment,
  kOrphanLabel,
  kEmptyMask,
  kClassOutOfRange,
  kNoEvaluatedClasses,
  kBadMagic,
  kBadVersion,
  kTruncated,
  kNonFinite,
  kMalformed,
  kManifestMismatch,
  kOrphanRowOrColumn,
  kFingerprintMismatch,
  kInfeasibleSpec,
  kIo,
};

std::string_view error_code_name(ErrorCode code) noexcept;

/// Every failure surfaced by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// what() without the code name prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace segref
