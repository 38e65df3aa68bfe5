#pragma once

#include <stdexcept>
#include <string>

namespace blocksr {

enum class ErrorCode {
  kInvalidArgument,
  kUnsupportedStep,
  kDimensionMismatch,
  kShapeMismatch,
  kBadMagic,
  kTruncated,
  kInvalidHeader,
  kSyntax,
  kRange,
  kGeometryMismatch,
  kIo,
};

const char* to_string(ErrorCode code);

/// Base exception for every library failure. `code()` lets callers (the CLI and
/// the HTTP service) map failures to exit codes and status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by text parsers. `field` names the offending parameter for range
/// violations; line and column are 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(ErrorCode code, const std::string& message, int line, int column,
             std::string field = {});

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }
  const std::string& field() const noexcept { return field_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  int line_;
  int column_;
  std::string field_;
};

}  // namespace blocksr
