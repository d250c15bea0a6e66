#include "trajsim/error.hpp"

namespace trajsim {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kUnknownLabel: return "UnknownLabel";
    case Errc::kEmptySet: return "EmptySet";
    case Errc::kLabelParseError: return "LabelParseError";
    case Errc::kAlternationError: return "AlternationError";
    case Errc::kInvalidRule: return "InvalidRule";
    case Errc::kInvalidConfig: return "InvalidConfig";
    case Errc::kEmptyCorpus: return "EmptyCorpus";
    case Errc::kEmptySample: return "EmptySample";
    case Errc::kMissingField: return "MissingField";
    case Errc::kUnknownLocale: return "UnknownLocale";
    case Errc::kUnknownSetting: return "UnknownSetting";
    case Errc::kTimeout: return "Timeout";
    case Errc::kRateLimited: return "RateLimited";
    case Errc::kMalformedResponse: return "MalformedResponse";
    case Errc::kAuthError: return "AuthError";
    case Errc::kUnknownProfile: return "UnknownProfile";
    case Errc::kUnknownTrajectory: return "UnknownTrajectory";
    case Errc::kUnknownSession: return "UnknownSession";
    case Errc::kSessionClosed: return "SessionClosed";
    case Errc::kStrategyNotPermitted: return "StrategyNotPermitted";
    case Errc::kInsufficientSessions: return "InsufficientSessions";
    case Errc::kUnparseableVerdict: return "UnparseableVerdict";
    case Errc::kMissingVerdicts: return "MissingVerdicts";
    case Errc::kEmptyCell: return "EmptyCell";
    case Errc::kInvalidScore: return "InvalidScore";
    case Errc::kIoError: return "IoError";
    case Errc::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace trajsim
