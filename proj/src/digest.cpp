#include "werprobe/digest.hpp"

#include <cstdio>

WERPROBE_NAMESPACE_BEGIN

void Digest::update(std::span<const std::byte> bytes) {
  for (std::byte b : bytes) {
    state_ ^= static_cast<std::uint64_t>(b);
    state_ *= 0x100000001b3ULL;
  }
}

void Digest::update(std::string_view text) { update(std::as_bytes(std::span(text.data(), text.size()))); }

std::string Digest::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(state_));
  return buf;
}

std::string digest_of(std::string_view text) {
  Digest d;
  d.update(text);
  return d.hex();
}

std::uint64_t hash64(std::string_view text) {
  Digest d;
  d.update(text);
  return d.value();
}

WERPROBE_NAMESPACE_END
