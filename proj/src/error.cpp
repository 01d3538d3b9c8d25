#include "kubm/error.hpp"

namespace kubm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::DimensionMismatch: return "dimension mismatch";
    case ErrorCode::EmptyDataset: return "empty dataset";
    case ErrorCode::AlreadyAugmented: return "already augmented";
    case ErrorCode::DegenerateScale: return "degenerate scale";
    case ErrorCode::IndexOutOfRange: return "index out of range";
    case ErrorCode::NonScalarLoss: return "non-scalar loss";
    case ErrorCode::PoisonedGradient: return "poisoned gradient";
    case ErrorCode::NonFiniteLoss: return "non-finite loss";
    case ErrorCode::NonConvergence: return "non-convergence";
    case ErrorCode::VersionMismatch: return "version mismatch";
    case ErrorCode::CorruptFile: return "corrupt file";
    case ErrorCode::WrongPointCount: return "wrong point count";
    case ErrorCode::DegenerateMetric: return "degenerate metric";
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::Io: return "i/o error";
  }
  return "unknown error";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

ParseError::ParseError(std::size_t line, const std::string& message)
    : Error(ErrorCode::Parse, "line " + std::to_string(line) + ": " + message), line_(line) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace kubm
