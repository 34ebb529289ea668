#include "wordspot/errors.hpp"

namespace wordspot {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyLabel: return "EmptyLabel";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::NonBinaryTarget: return "NonBinaryTarget";
    case ErrorCode::DegenerateBox: return "DegenerateBox";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::NoRelevantInstances: return "NoRelevantInstances";
    case ErrorCode::WordTooLarge: return "WordTooLarge";
    case ErrorCode::UnknownPage: return "UnknownPage";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptIndex: return "CorruptIndex";
    case ErrorCode::CorruptModel: return "CorruptModel";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ImageDecode: return "ImageDecode";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace wordspot
