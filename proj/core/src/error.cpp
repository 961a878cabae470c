#include "wadamp/error.hpp"

namespace wadamp {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DisconnectedNetwork: return "DisconnectedNetwork";
    case ErrorCode::SingularInteriorBlock: return "SingularInteriorBlock";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NonPositiveEpsilon: return "NonPositiveEpsilon";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::ZeroCouplingGain: return "ZeroCouplingGain";
    case ErrorCode::NotStronglyConnected: return "NotStronglyConnected";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::InsufficientData: return "InsufficientData";
  }
  return "Unknown";
}

}  // namespace wadamp
