#include "guidesynth/error.hpp"

namespace guidesynth {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::kInvalidDepth: return "InvalidDepth";
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kEmptyMesh: return "EmptyMesh";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kTooFewCorrespondences: return "TooFewCorrespondences";
    case ErrorCode::kNumericalFailure: return "NumericalFailure";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kBlockCountMismatch: return "BlockCountMismatch";
    case ErrorCode::kBadTimestepOrder: return "BadTimestepOrder";
    case ErrorCode::kInvalidRange: return "InvalidRange";
    case ErrorCode::kInvalidParams: return "InvalidParams";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kCorruptManifest: return "CorruptManifest";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigError: return 3;
    case ErrorCode::kInvalidParams: return 4;
    case ErrorCode::kIoError: return 10;
    case ErrorCode::kParseError: return 11;
    case ErrorCode::kCorruptManifest: return 12;
    case ErrorCode::kNonPositiveDepth: return 20;
    case ErrorCode::kInvalidDepth: return 21;
    case ErrorCode::kOutOfBounds: return 22;
    case ErrorCode::kEmptyMesh: return 23;
    case ErrorCode::kEmptyInput: return 24;
    case ErrorCode::kDimensionMismatch: return 25;
    case ErrorCode::kTooFewCorrespondences: return 30;
    case ErrorCode::kNumericalFailure: return 31;
    case ErrorCode::kShapeMismatch: return 40;
    case ErrorCode::kBlockCountMismatch: return 41;
    case ErrorCode::kBadTimestepOrder: return 42;
    case ErrorCode::kInvalidRange: return 43;
  }
  return 1;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace guidesynth
