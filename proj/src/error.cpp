#include "segref/error.hpp"

namespace segref {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kZeroRow: return "ZeroRow";
    case ErrorCode::kNotNormalized: return "NotNormalized";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kZeroMedian: return "ZeroMedian";
    case ErrorCode::kZeroMean: return "ZeroMean";
    case ErrorCode::kNoRoot: return "NoRoot";
    case ErrorCode::kTooFewGroups: return "TooFewGroups";
    case ErrorCode::kMissingCrossModalScores: return "MissingCrossModalScores";
    case ErrorCode::kMissingEmbedding: return "MissingEmbedding";
    case ErrorCode::kOrphanSegment: return "OrphanSegment";
    case ErrorCode::kOrphanLabel: return "OrphanLabel";
    case ErrorCode::kEmptyMask: return "EmptyMask";
    case ErrorCode::kClassOutOfRange: return "ClassOutOfRange";
    case ErrorCode::kNoEvaluatedClasses: return "NoEvaluatedClasses";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kBadVersion: return "BadVersion";
    case ErrorCode::kTruncated: return "Truncated";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kMalformed: return "Malformed";
    case ErrorCode::kManifestMismatch: return "ManifestMismatch";
    case ErrorCode::kOrphanRowOrColumn: return "OrphanRowOrColumn";
    case ErrorCode::kFingerprintMismatch: return "FingerprintMismatch";
    case ErrorCode::kInfeasibleSpec: return "InfeasibleSpec";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace segref
