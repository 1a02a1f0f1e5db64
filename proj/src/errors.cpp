#include "binsight/errors.hpp"

namespace binsight {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidPoint: return "InvalidPoint";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingLabels: return "MissingLabels";
    case ErrorCode::NoScans: return "NoScans";
    case ErrorCode::ParamMismatch: return "ParamMismatch";
    case ErrorCode::NothingToInpaint: return "NothingToInpaint";
    case ErrorCode::NotInpainted: return "NotInpainted";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::StratifyError: return "StratifyError";
    case ErrorCode::ExternalSegmenterError: return "ExternalSegmenterError";
    case ErrorCode::WorkpieceDoesNotFit: return "WorkpieceDoesNotFit";
    case ErrorCode::BadRectangle: return "BadRectangle";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::Conflict: return "Conflict";
    case ErrorCode::PipelineError: return "PipelineError";
  }
  return "Unknown";
}

}  // namespace binsight
