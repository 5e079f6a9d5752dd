#include "werprobe/error.hpp"

WERPROBE_NAMESPACE_BEGIN

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::InvalidWindow: return "invalid-window error";
    case ErrorKind::Label: return "label error";
    case ErrorKind::EmptyBatch: return "empty-batch error";
    case ErrorKind::Vocabulary: return "vocabulary error";
    case ErrorKind::InfeasibleBalance: return "infeasible-balance error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::UnsupportedVersion: return "unsupported-version error";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Alignment: return "alignment error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::UndefinedCorrelation: return "undefined-correlation error";
    case ErrorKind::Io: return "I/O error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

WERPROBE_NAMESPACE_END
