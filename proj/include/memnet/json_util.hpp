#pragma once

#include <string>

#include <json.hpp>

#include "error.hpp"

namespace memnet::detail {

/// Reads a numeric field; absent or null yields `fallback` unless required.
inline double json_number(const nlohmann::json& j, const char* key, const std::string& path, double fallback,
                          bool required) {
    if (!j.contains(key) || j.at(key).is_null()) {
        if (required) throw InvalidInput(path + "." + key + ": missing");
        return fallback;
    }
    if (!j.at(key).is_number()) throw InvalidInput(path + "." + key + ": must be a number");
    return j.at(key).get<double>();
}

}  // namespace memnet::detail
