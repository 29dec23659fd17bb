#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace costar {

enum class ErrorCode {
  DuplicateId,
  Unreachable,
  NothingToGrasp,
  UnknownPredicate,
  UnknownSymbol,
  ArityMismatch,
  MalformedTree,
  UnboundOperation,
  SyntaxError,
  UnsupportedMode,
  NoFeasibleGoal,
  InvalidParameter,
  DegenerateMotions,
  InconsistentPair,
  MarkerNotVisible,
  ValidationFailed,
  TickBudgetExceeded,
  UnknownTopic,
  InvalidScene,
  NotFound,
};

std::string_view toString(ErrorCode code);

/// Every recoverable failure in the engine is reported through this type; the
/// code is what callers branch on, the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(toString(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace costar
