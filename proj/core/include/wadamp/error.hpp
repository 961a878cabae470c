#pragma once

#include <stdexcept>
#include <string>

namespace wadamp {

enum class ErrorCode {
  InvalidInput,
  DimensionMismatch,
  NoConvergence,
  DisconnectedNetwork,
  SingularInteriorBlock,
  RankDeficient,
  NonPositiveEpsilon,
  Infeasible,
  ZeroCouplingGain,
  NotStronglyConnected,
  NonFiniteState,
  InsufficientData,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries a code so callers (the CLI in
// particular) can map it onto an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace wadamp
