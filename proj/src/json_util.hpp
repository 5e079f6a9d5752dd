#pragma once

#include <json.hpp>
#include <set>
#include <string>

#include "werprobe/error.hpp"

WERPROBE_NAMESPACE_BEGIN

using Json = nlohmann::json;

/// Reads fields out of a JSON object, rejecting unknown keys on finish().
/// Missing keys keep the caller's default.
class StrictReader {
 public:
  StrictReader(const Json& object, std::string context) : object_(object), context_(std::move(context)) {
    if (!object_.is_object()) fail(ErrorKind::Config, context_ + ": expected a JSON object");
  }

  template <typename T>
  bool get(const char* key, T& out) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end()) return false;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Config, context_ + "." + key + ": " + e.what());
    }
    return true;
  }

  /// Returns the sub-object for key, or nullptr if absent.
  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = object_.find(key);
    return it == object_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return context_ + "." + key; }

  void finish() const {
    for (auto it = object_.begin(); it != object_.end(); ++it) {
      if (!seen_.contains(it.key())) fail(ErrorKind::Config, context_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const Json& object_;
  std::string context_;
  std::set<std::string> seen_;
};

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Parse, what + ": " + e.what());
  }
}

WERPROBE_NAMESPACE_END
