#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bucketline {

enum class ErrorCode {
  // framecodec
  OversizeMsdu,
  IcvMismatch,
  BadLength,
  UnknownType,
  ZeroSeed,
  UnsupportedRate,
  LengthMismatch,
  // modem
  UnsupportedOrder,
  Overflow,
  DemodFailed,
  // channel / analytics
  BadShape,
  BadOrder,
  // protocol / simkernel
  AssociationStalled,
  CycleTimeout,
  OrphanUnreachable,
  UnknownTarget,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace bucketline
