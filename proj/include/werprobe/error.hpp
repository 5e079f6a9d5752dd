#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "werprobe/config.hpp"

WERPROBE_NAMESPACE_BEGIN

enum class ErrorKind {
  Dimension,
  Config,
  InvalidWindow,
  Label,
  EmptyBatch,
  Vocabulary,
  InfeasibleBalance,
  Parse,
  Format,
  UnsupportedVersion,
  Data,
  Alignment,
  Numeric,
  UndefinedCorrelation,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it onto a stable exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

WERPROBE_NAMESPACE_END
