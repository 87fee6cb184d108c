#include "ensemhal/error.hpp"

namespace ensemhal {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyTrace: return "EmptyTrace";
    case ErrorCode::DegenerateDataset: return "DegenerateDataset";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::MissingRepresentation: return "MissingRepresentation";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingleClassTraining: return "SingleClassTraining";
    case ErrorCode::SingleClassEval: return "SingleClassEval";
    case ErrorCode::InsufficientRuns: return "InsufficientRuns";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
  }
  return "Unknown";
}

}  // namespace ensemhal
