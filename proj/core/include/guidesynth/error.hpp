#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace guidesynth {

// Every failure raised by the library carries one of these codes. The CLI maps
// each code to a distinct process exit status (see exit_code()).
enum class ErrorCode {
  kNonPositiveDepth,
  kInvalidDepth,
  kOutOfBounds,
  kEmptyMesh,
  kEmptyInput,
  kTooFewCorrespondences,
  kNumericalFailure,
  kDimensionMismatch,
  kShapeMismatch,
  kBlockCountMismatch,
  kBadTimestepOrder,
  kInvalidRange,
  kInvalidParams,
  kConfigError,
  kParseError,
  kCorruptManifest,
  kIoError,
};

std::string_view to_string(ErrorCode code);

// Process exit status for a code. 0 is success, 1 is reserved for unexpected
// failures and 2 for command-line usage errors.
int exit_code(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace guidesynth
