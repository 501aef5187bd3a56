// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/error.hpp"
#include "artinerf/types.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace artinerf {

using Json = nlohmann::json;

inline std::string read_text_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(path.string(), "", "cannot open file for reading");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::filesystem::path &path, const std::string &text) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError(path.string(), "", "cannot open file for writing");
    }
    out << text;
    if (!out) {
        throw DataError(path.string(), "", "write failed");
    }
}

inline Json parse_json(const std::string &text, const std::string &origin) {
    try {
        return Json::parse(text);
    } catch (const Json::exception &e) {
        throw DataError(origin, "", std::string("invalid JSON: ") + e.what());
    }
}

inline Json read_json_file(const std::filesystem::path &path) {
    return parse_json(read_text_file(path), path.string());
}

/// Checked field access. Errors name the file and the field.
class JsonReader {
  public:
    JsonReader(const Json &doc, std::string origin) : doc_(doc), origin_(std::move(origin)) {}

    const Json &at(const std::string &field) const {
        if (!doc_.is_object() || !doc_.contains(field)) {
            throw DataError(origin_, field, "missing field");
        }
        return doc_.at(field);
    }

    template <typename T>
    T get(const std::string &field) const {
        try {
            return at(field).get<T>();
        } catch (const Json::exception &e) {
            throw DataError(origin_, field, std::string("wrong type: ") + e.what());
        }
    }

    template <typename T>
    T get_or(const std::string &field, T fallback) const {
        if (!doc_.is_object() || !doc_.contains(field)) {
            return fallback;
        }
        return get<T>(field);
    }

    Vec3 vec3(const Json &value, const std::string &field) const {
        if (!value.is_array() || value.size() != 3) {
            throw DataError(origin_, field, "expected an array of 3 numbers");
        }
        Vec3 v;
        for (int i = 0; i < 3; ++i) {
            if (!value[i].is_number()) {
                throw DataError(origin_, field, "expected an array of 3 numbers");
            }
            v[i] = value[i].get<double>();
        }
        return v;
    }

    Vec3 vec3(const std::string &field) const { return vec3(at(field), field); }

    std::vector<Vec3> vec3_list(const std::string &field) const {
        const Json &arr = at(field);
        if (!arr.is_array()) {
            throw DataError(origin_, field, "expected an array");
        }
        std::vector<Vec3> out;
        out.reserve(arr.size());
        for (std::size_t i = 0; i < arr.size(); ++i) {
            out.push_back(vec3(arr[i], field + "[" + std::to_string(i) + "]"));
        }
        return out;
    }

    void expect_format(const std::string &format, int version) const {
        if (get<std::string>("format") != format) {
            throw DataError(origin_, "format", "expected '" + format + "'");
        }
        const int found = get<int>("version");
        if (found != version) {
            throw DataError(origin_, "version", "unsupported version " + std::to_string(found));
        }
    }

    const std::string &origin() const { return origin_; }

  private:
    const Json &doc_;
    std::string origin_;
};

inline Json to_json(const Vec3 &v) { return Json::array({v.x(), v.y(), v.z()}); }

} // namespace artinerf
