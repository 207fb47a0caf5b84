#include "imitate/actions.hpp"
#include "imitate/error.hpp"

namespace imitate {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedMap: return "MalformedMap";
    case ErrorCode::kSteppedAfterTermination: return "SteppedAfterTermination";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kMapContainsHazard: return "MapContainsHazard";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kEmptyCorrection: return "EmptyCorrection";
    case ErrorCode::kEmptyRollout: return "EmptyRollout";
    case ErrorCode::kUnreachable: return "Unreachable";
    case ErrorCode::kNotInControl: return "NotInControl";
    case ErrorCode::kProbeUnreached: return "ProbeUnreached";
    case ErrorCode::kMismatchedSeeds: return "MismatchedSeeds";
    case ErrorCode::kEndpointUnavailable: return "EndpointUnavailable";
    case ErrorCode::kClientProtocolViolation: return "ClientProtocolViolation";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kUsage: return "Usage";
  }
  return "Unknown";
}

std::string_view action_name(ActionId a) {
  switch (a) {
    case ActionId::kForward: return "FORWARD";
    case ActionId::kBack: return "BACK";
    case ActionId::kTurnLeft: return "TURN_LEFT";
    case ActionId::kTurnRight: return "TURN_RIGHT";
    case ActionId::kJumpForward: return "JUMP_FORWARD";
    case ActionId::kPitchUp: return "PITCH_UP";
    case ActionId::kPitchDown: return "PITCH_DOWN";
    case ActionId::kNoop: return "NOOP";
    case ActionId::kEndEpisode: return "END_EPISODE";
  }
  return "?";
}

}  // namespace imitate
