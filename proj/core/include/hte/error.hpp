#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hte {

enum class ErrorCode {
  // Usage and configuration.
  kBadConfig,
  kBadSchema,
  kIo,
  // Input data.
  kMissingColumn,
  kParseError,
  kUnknownCategory,
  kAllMissing,
  kPlanMismatch,
  kBadInputs,
  kMissingOutcome,
  kNotImputed,
  kEmptyData,
  kFeatureMismatch,
  kTooFewGroups,
  kBadK,
  kLengthMismatch,
  kEmpty,
  kNoDefinedFolds,
  kZeroVariance,
  kTooManyFeatures,
  kUnknownFeature,
  kDegenerateDesign,
  kMissingCovers,
  // Internal invariant violations.
  kEmptyNode,
  kInternal,
};

enum class ErrorClass { kUsage, kData, kInternal };

std::string_view error_code_name(ErrorCode code);
ErrorClass classify(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace hte
