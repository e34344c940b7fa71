#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "setpose/error.hpp"

namespace setpose::detail {

/// Reads known keys out of a JSON object and rejects everything else.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string section)
      : json_(j), section_(std::move(section)) {
    if (!j.is_object()) throw ConfigError("config section '" + section_ + "' must be an object");
  }

  template <class T>
  bool read(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = json_.find(key);
    if (it == json_.end()) return false;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key '" + section_ + "." + key + "': " + e.what());
    }
    return true;
  }

  /// Throws ConfigError naming the first key that was never read.
  void finish() const {
    for (const auto& [key, value] : json_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown config key '" + section_ + "." + key + "'");
    }
  }

  const std::string& section() const { return section_; }

 private:
  const nlohmann::json& json_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace setpose::detail
