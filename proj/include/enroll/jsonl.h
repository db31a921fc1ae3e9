#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "enroll/errors.h"

namespace enroll {

// Applies fn to every nonempty line, wrapping any parse/validation failure
// as "<path>:<line>: <reason>".
template <typename Fn>
void for_each_jsonl(const std::string& path, Fn fn) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path);
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            nlohmann::ordered_json j = nlohmann::ordered_json::parse(line);
            fn(j);
        } catch (const DataError& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline std::string get_string(const nlohmann::ordered_json& j, const char* key) {
    if (!j.contains(key)) throw DataError(std::string("missing field \"") + key + "\"");
    if (!j.at(key).is_string()) {
        throw DataError(std::string("field \"") + key + "\" must be a string");
    }
    return j.at(key).get<std::string>();
}

} // namespace enroll
