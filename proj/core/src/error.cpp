#include "hte/error.hpp"

namespace hte {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kBadConfig: return "BadConfig";
    case ErrorCode::kBadSchema: return "BadSchema";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kUnknownCategory: return "UnknownCategory";
    case ErrorCode::kAllMissing: return "AllMissing";
    case ErrorCode::kPlanMismatch: return "PlanMismatch";
    case ErrorCode::kBadInputs: return "BadInputs";
    case ErrorCode::kMissingOutcome: return "MissingOutcome";
    case ErrorCode::kNotImputed: return "NotImputed";
    case ErrorCode::kEmptyData: return "EmptyData";
    case ErrorCode::kFeatureMismatch: return "FeatureMismatch";
    case ErrorCode::kTooFewGroups: return "TooFewGroups";
    case ErrorCode::kBadK: return "BadK";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmpty: return "Empty";
    case ErrorCode::kNoDefinedFolds: return "NoDefinedFolds";
    case ErrorCode::kZeroVariance: return "ZeroVariance";
    case ErrorCode::kTooManyFeatures: return "TooManyFeatures";
    case ErrorCode::kUnknownFeature: return "UnknownFeature";
    case ErrorCode::kDegenerateDesign: return "DegenerateDesign";
    case ErrorCode::kMissingCovers: return "MissingCovers";
    case ErrorCode::kEmptyNode: return "EmptyNode";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

ErrorClass classify(ErrorCode code) {
  switch (code) {
    case ErrorCode::kBadConfig:
    case ErrorCode::kBadSchema:
    case ErrorCode::kIo:
      return ErrorClass::kUsage;
    case ErrorCode::kEmptyNode:
    case ErrorCode::kInternal:
      return ErrorClass::kInternal;
    default:
      return ErrorClass::kData;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
      code_(code) {}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace hte
