#pragma once

#include <stdexcept>
#include <string>

namespace fairmarket {

enum class ErrorCode {
  kIOFailure,
  kHeaderMismatch,
  kUnknownAttribute,
  kUnknownRelation,
  kEmptyRelation,
  kEmptyNecessarySet,
  kUnknownAttributeInDependency,
  kInvalidConfig,
  kInvalidWeights,
  kUncoveredWeight,
  kZeroCellTotal,
  kZeroBaseline,
  kEmptyMarket,
  kRandomnessFailure,
  kNegativeAmount,
  kAmountOutOfRange,
  kNotInvertible,
  kUnknownUser,
  kInsufficientBalance,
  kStaleSession,
  kArchiveUnavailable,
  kSetupError,
  kInvalidArgument,
};

const char* to_string(ErrorCode code) noexcept;
/// Inverse of to_string; unknown names map to kInvalidArgument.
ErrorCode parse_error_code(const std::string& name) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fairmarket
