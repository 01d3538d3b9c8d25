#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace kubm {

enum class ErrorCode {
  Parse,
  DimensionMismatch,
  EmptyDataset,
  AlreadyAugmented,
  DegenerateScale,
  IndexOutOfRange,
  NonScalarLoss,
  PoisonedGradient,
  NonFiniteLoss,
  NonConvergence,
  VersionMismatch,
  CorruptFile,
  WrongPointCount,
  DegenerateMetric,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Base exception for every failure raised by the library. The code allows
/// callers (and tests) to branch on the failure class without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failure in a line-oriented file; `line` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace kubm
