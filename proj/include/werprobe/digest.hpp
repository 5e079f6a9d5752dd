#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "werprobe/config.hpp"

WERPROBE_NAMESPACE_BEGIN

/// Incremental 64-bit FNV-1a, rendered as 16 hex digits. Provenance only;
/// not a cryptographic hash.
class Digest {
 public:
  void update(std::span<const std::byte> bytes);
  void update(std::string_view text);
  std::string hex() const;
  std::uint64_t value() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string digest_of(std::string_view text);
std::uint64_t hash64(std::string_view text);

WERPROBE_NAMESPACE_END
