#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rssiloc {

enum class Errc {
  MalformedRecord,
  TimestampOutOfRange,
  NonFiniteRssi,
  EmptyDataset,
  ConnectionLost,
  AllMissing,
  EmptyTrainingSet,
  ShapeMismatch,
  IndexOutOfRange,
  NonFiniteLoss,
  DatasetTooSmall,
  EmptyTestSet,
  NoOverlap,
  AlreadyRecording,
  NoSuchSession,
  SessionNotRecording,
  OutOfCanvas,
  ModelNotLoaded,
  ModeMismatch,
  InvalidConfig,
  CorruptFile,
  Io,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace rssiloc
