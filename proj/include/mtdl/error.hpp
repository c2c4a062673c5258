#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mtdl {

enum class ErrorCode {
  NonFinite,
  NegativeEntry,
  BadSum,
  ShapeMismatch,
  VariantMismatch,
  LengthMismatch,
  EmptySplit,
  EmptyFrame,
  TooLarge,
  Divergence,
  IoError,
  ConfigError,
  MissingVideo,
  InvalidArgument,
};

std::string_view error_code_name(ErrorCode code);

/// Exception carrying a machine-readable code. The CLI prints
/// `error: <CodeName>: <message>` and exits nonzero.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mtdl
