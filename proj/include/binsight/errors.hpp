#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace binsight {

enum class ErrorCode {
  InvalidArgument,
  InvalidPoint,
  EmptyCloud,
  ShapeMismatch,
  MissingLabels,
  NoScans,
  ParamMismatch,
  NothingToInpaint,
  NotInpainted,
  ParseError,
  IoError,
  StratifyError,
  ExternalSegmenterError,
  WorkpieceDoesNotFit,
  BadRectangle,
  NotFound,
  Conflict,
  PipelineError,
};

const char* to_string(ErrorCode code);

// Base of every error thrown by the library. Catch by subtype for a specific
// failure, or by Error and inspect code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define BINSIGHT_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what)                           \
        : Error(ErrorCode::Name, what) {}                            \
  }

BINSIGHT_DEFINE_ERROR(InvalidArgument);
BINSIGHT_DEFINE_ERROR(InvalidPoint);
BINSIGHT_DEFINE_ERROR(EmptyCloud);
BINSIGHT_DEFINE_ERROR(ShapeMismatch);
BINSIGHT_DEFINE_ERROR(MissingLabels);
BINSIGHT_DEFINE_ERROR(NoScans);
BINSIGHT_DEFINE_ERROR(ParamMismatch);
BINSIGHT_DEFINE_ERROR(NothingToInpaint);
BINSIGHT_DEFINE_ERROR(NotInpainted);
BINSIGHT_DEFINE_ERROR(IoError);
BINSIGHT_DEFINE_ERROR(StratifyError);
BINSIGHT_DEFINE_ERROR(ExternalSegmenterError);
BINSIGHT_DEFINE_ERROR(WorkpieceDoesNotFit);
BINSIGHT_DEFINE_ERROR(BadRectangle);
BINSIGHT_DEFINE_ERROR(NotFound);

#undef BINSIGHT_DEFINE_ERROR

// Malformed input file. line() is 1-based for text formats, 0 when the
// failure is not tied to a line (binary payloads, truncation).
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(ErrorCode::ParseError,
              file + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        file_(file),
        line_(line) {}
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

// Optimistic-concurrency failure; carries the revision the caller must retry
// against.
class Conflict : public Error {
 public:
  Conflict(const std::string& what, long current_revision)
      : Error(ErrorCode::Conflict, what), revision_(current_revision) {}
  long current_revision() const noexcept { return revision_; }

 private:
  long revision_;
};

// A segmentation pipeline stage failed. stage() names the step, cause() is
// the code of the original error.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, ErrorCode cause, const std::string& what)
      : Error(ErrorCode::PipelineError, "stage '" + stage + "': " + what),
        stage_(std::move(stage)),
        cause_(cause) {}
  const std::string& stage() const noexcept { return stage_; }
  ErrorCode cause() const noexcept { return cause_; }

 private:
  std::string stage_;
  ErrorCode cause_;
};

}  // namespace binsight
