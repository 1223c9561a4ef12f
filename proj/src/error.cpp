#include "sdi/error.hpp"

namespace sdi {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kInvalidDepth: return "invalid-depth";
    case ErrorCode::kEmptyRegion: return "empty-region";
    case ErrorCode::kEmptyPointSet: return "empty-point-set";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kConfiguration: return "configuration";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kLimit: return "limit";
    case ErrorCode::kStationaryPoint: return "stationary-point";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kBaselineFailure: return "baseline-failure";
    case ErrorCode::kInvalidScene: return "invalid-scene";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kPortInUse: return "port-in-use";
  }
  return "unknown";
}

}  // namespace sdi
