#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sdi {

/// Error classes shared by the library, the CLI (as exit codes) and the
/// HTTP service (as structured error payloads).
enum class ErrorCode {
  kShape = 10,            // dimension or length mismatch
  kInvalidDepth = 11,     // non-positive or non-finite depth
  kEmptyRegion = 12,      // degenerate sketch polygon
  kEmptyPointSet = 13,    // no valid depth under a sketch
  kInsufficientData = 14,
  kDivergence = 15,       // non-finite loss or objective
  kConfiguration = 16,
  kParse = 17,
  kLimit = 18,            // joint value outside limits
  kStationaryPoint = 19,  // projection hit a vanishing gradient
  kInfeasible = 20,
  kBaselineFailure = 21,
  kInvalidScene = 22,
  kIo = 23,
  kPortInUse = 24,
};

std::string_view error_name(ErrorCode code);

inline int exit_code(ErrorCode code) { return static_cast<int>(code); }

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sdi
