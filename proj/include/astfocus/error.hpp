#ifndef ASTFOCUS_ERROR_HPP_
#define ASTFOCUS_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace astfocus {

enum class ErrorCode {
  kPatchLargerThanFrame,
  kZeroFramesSelected,
  kRectOutOfBounds,
  kShapeMismatch,
  kUnboundInput,
  kNonScalarOutput,
  kNonpositivePrevValue,
  kInvalidBound,
  kEmptySelection,
  kOddSampleCount,
  kLengthMismatch,
  kOracleFailure,
  kUnsupportedOracle,
  kRemoteUnavailable,
  kProtocolError,
  kBudgetExhausted,
  kEmptyBatch,
  kInvalidArgument,
  kIoError,
  kFormatError,
  kConfigError,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so
// callers (the CLI in particular) can map them to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace astfocus

#endif  // ASTFOCUS_ERROR_HPP_
