#include "rssiloc/error.hpp"

namespace rssiloc {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::TimestampOutOfRange: return "TimestampOutOfRange";
    case Errc::NonFiniteRssi: return "NonFiniteRssi";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::ConnectionLost: return "ConnectionLost";
    case Errc::AllMissing: return "AllMissing";
    case Errc::EmptyTrainingSet: return "EmptyTrainingSet";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::DatasetTooSmall: return "DatasetTooSmall";
    case Errc::EmptyTestSet: return "EmptyTestSet";
    case Errc::NoOverlap: return "NoOverlap";
    case Errc::AlreadyRecording: return "AlreadyRecording";
    case Errc::NoSuchSession: return "NoSuchSession";
    case Errc::SessionNotRecording: return "SessionNotRecording";
    case Errc::OutOfCanvas: return "OutOfCanvas";
    case Errc::ModelNotLoaded: return "ModelNotLoaded";
    case Errc::ModeMismatch: return "ModeMismatch";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::CorruptFile: return "CorruptFile";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace rssiloc
