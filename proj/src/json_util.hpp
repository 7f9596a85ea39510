#pragma once

// Small helpers for strict JSON config parsing.

#include "weightflow/core.hpp"

#include <nlohmann/json.hpp>

#include <initializer_list>
#include <string>
#include <string_view>

namespace weightflow::jsonutil {

inline void require_object(const nlohmann::json& j, std::string_view context) {
  if (!j.is_object()) throw ConfigError(std::string(context) + ": expected an object");
}

/// Rejects keys outside `allowed`.
inline void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                       std::string_view context) {
  require_object(j, context);
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(std::string(context) + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback, std::string_view context) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(context) + ": key '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_required(const nlohmann::json& j, const char* key, std::string_view context) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    throw ConfigError(std::string(context) + ": missing required key '" + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(context) + ": key '" + key + "' has the wrong type");
  }
}

inline Date get_date(const nlohmann::json& j, const char* key, std::string_view context) {
  const auto s = get_required<std::string>(j, key, context);
  try {
    return Date::parse(s);
  } catch (const DataError& e) {
    throw ConfigError(std::string(context) + ": " + e.what());
  }
}

}  // namespace weightflow::jsonutil
