#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace imitate {

enum class ErrorCode {
  kMalformedMap,
  kSteppedAfterTermination,
  kNonFiniteInput,
  kEmptyBatch,
  kShapeMismatch,
  kBadMagic,
  kVersionMismatch,
  kTruncatedFile,
  kMapContainsHazard,
  kEmptyDataset,
  kEmptyCorrection,
  kEmptyRollout,
  kUnreachable,
  kNotInControl,
  kProbeUnreached,
  kMismatchedSeeds,
  kEndpointUnavailable,
  kClientProtocolViolation,
  kIo,
  kUsage,
};

std::string_view error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace imitate
