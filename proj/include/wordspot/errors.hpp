#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wordspot {

enum class ErrorCode {
  EmptyLabel,
  ZeroVector,
  NonBinaryTarget,
  DegenerateBox,
  DimensionMismatch,
  EmptyCorpus,
  NoRelevantInstances,
  WordTooLarge,
  UnknownPage,
  VersionMismatch,
  CorruptIndex,
  CorruptModel,
  InvalidConfig,
  ImageDecode,
  Io,
};

std::string_view error_name(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so the
/// CLI and HTTP layers can map it to an exit status or response code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace wordspot
