#include "fairmarket/error.hpp"

namespace fairmarket {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kIOFailure: return "IOFailure";
    case ErrorCode::kHeaderMismatch: return "HeaderMismatch";
    case ErrorCode::kUnknownAttribute: return "UnknownAttribute";
    case ErrorCode::kUnknownRelation: return "UnknownRelation";
    case ErrorCode::kEmptyRelation: return "EmptyRelation";
    case ErrorCode::kEmptyNecessarySet: return "EmptyNecessarySet";
    case ErrorCode::kUnknownAttributeInDependency: return "UnknownAttributeInDependency";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kInvalidWeights: return "InvalidWeights";
    case ErrorCode::kUncoveredWeight: return "UncoveredWeight";
    case ErrorCode::kZeroCellTotal: return "ZeroCellTotal";
    case ErrorCode::kZeroBaseline: return "ZeroBaseline";
    case ErrorCode::kEmptyMarket: return "EmptyMarket";
    case ErrorCode::kRandomnessFailure: return "RandomnessFailure";
    case ErrorCode::kNegativeAmount: return "NegativeAmount";
    case ErrorCode::kAmountOutOfRange: return "AmountOutOfRange";
    case ErrorCode::kNotInvertible: return "NotInvertible";
    case ErrorCode::kUnknownUser: return "UnknownUser";
    case ErrorCode::kInsufficientBalance: return "InsufficientBalance";
    case ErrorCode::kStaleSession: return "StaleSession";
    case ErrorCode::kArchiveUnavailable: return "ArchiveUnavailable";
    case ErrorCode::kSetupError: return "SetupError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

ErrorCode parse_error_code(const std::string& name) noexcept {
  for (int i = 0; i <= static_cast<int>(ErrorCode::kInvalidArgument); ++i) {
    const auto code = static_cast<ErrorCode>(i);
    if (name == to_string(code)) return code;
  }
  return ErrorCode::kInvalidArgument;
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace fairmarket
