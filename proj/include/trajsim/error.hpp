#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trajsim {

// Error codes surface verbatim in CLI output and HTTP `{code, message}` bodies.
enum class Errc {
  kUnknownLabel,
  kEmptySet,
  kLabelParseError,
  kAlternationError,
  kInvalidRule,
  kInvalidConfig,
  kEmptyCorpus,
  kEmptySample,
  kMissingField,
  kUnknownLocale,
  kUnknownSetting,
  kTimeout,
  kRateLimited,
  kMalformedResponse,
  kAuthError,
  kUnknownProfile,
  kUnknownTrajectory,
  kUnknownSession,
  kSessionClosed,
  kStrategyNotPermitted,
  kInsufficientSessions,
  kUnparseableVerdict,
  kMissingVerdicts,
  kEmptyCell,
  kInvalidScore,
  kIoError,
  kInvalidArgument,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }
  std::string_view name() const noexcept { return errc_name(code_); }

 private:
  Errc code_;
};

}  // namespace trajsim
