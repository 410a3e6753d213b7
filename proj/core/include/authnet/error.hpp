#pragma once

#include <stdexcept>
#include <string>

namespace authnet {

enum class ErrorCode {
  // configuration / harness
  ConfigInvalid,
  EmptyManifest,
  // corpus
  MissingRoot,
  MalformedLayout,
  EmptyCorpus,
  TargetHeldOut,
  InsufficientPositives,
  // preprocess
  UndecodableVideo,
  ZeroFrames,
  NoFaceInAnyFrame,
  // embedder
  BackendFailure,
  DimensionMismatch,
  ZeroVector,
  InsufficientSamples,
  // classifier
  SingleClassTrainingSet,
  ShapeMismatch,
  DivergedLoss,
  CorruptModelFile,
  ConfigMismatch,
  // metrics
  UndefinedMetric,
  SingleClassScores,
  // generic
  InvalidArgument,
  IoFailure,
};

const char* to_string(ErrorCode code) noexcept;

/// Domain exception carrying a stable error code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& message);

}  // namespace authnet
