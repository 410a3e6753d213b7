#include "authnet/error.hpp"

namespace authnet {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::EmptyManifest: return "EmptyManifest";
    case ErrorCode::MissingRoot: return "MissingRoot";
    case ErrorCode::MalformedLayout: return "MalformedLayout";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::TargetHeldOut: return "TargetHeldOut";
    case ErrorCode::InsufficientPositives: return "InsufficientPositives";
    case ErrorCode::UndecodableVideo: return "UndecodableVideo";
    case ErrorCode::ZeroFrames: return "ZeroFrames";
    case ErrorCode::NoFaceInAnyFrame: return "NoFaceInAnyFrame";
    case ErrorCode::BackendFailure: return "BackendFailure";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::SingleClassTrainingSet: return "SingleClassTrainingSet";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::CorruptModelFile: return "CorruptModelFile";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::UndefinedMetric: return "UndefinedMetric";
    case ErrorCode::SingleClassScores: return "SingleClassScores";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "UnknownError";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void raise(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace authnet
