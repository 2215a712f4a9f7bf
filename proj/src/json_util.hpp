#pragma once

// Strict JSON field access shared by the file and wire codecs. Every reader
// rejects unknown fields and reports failures with a dotted field path.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

#include "wristrehab/error.hpp"

namespace wr::detail {

using json = nlohmann::json;

[[noreturn]] inline void parse_fail(const std::string& path, const std::string& what) {
    throw Error(ErrorCode::ParseError, "field '" + path + "': " + what);
}

inline std::string join_path(const std::string& base, std::string_view key) {
    return base.empty() ? std::string(key) : base + "." + std::string(key);
}

/// Parses a whole document, turning nlohmann's exception (which carries
/// line/column) into a ParseError.
inline json parse_document(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ParseError, std::string("malformed JSON: ") + e.what());
    }
}

class ObjectReader {
public:
    ObjectReader(const json& object, std::string path) : object_(object), path_(std::move(path)) {
        if (!object_.is_object()) parse_fail(path_.empty() ? "<root>" : path_, "expected an object");
    }

    const std::string& path() const { return path_; }
    std::string path_of(std::string_view key) const { return join_path(path_, key); }

    bool has(std::string_view key) const {
        auto it = object_.find(std::string(key));
        return it != object_.end();
    }

    const json& required(std::string_view key) {
        seen_.insert(std::string(key));
        auto it = object_.find(std::string(key));
        if (it == object_.end()) parse_fail(path_of(key), "missing required field");
        return *it;
    }

    const json* optional(std::string_view key) {
        seen_.insert(std::string(key));
        auto it = object_.find(std::string(key));
        if (it == object_.end() || it->is_null()) return nullptr;
        return &*it;
    }

    double number(std::string_view key) { return as_number(required(key), path_of(key)); }

    std::int64_t integer(std::string_view key) { return as_integer(required(key), path_of(key)); }

    std::uint64_t unsigned_integer(std::string_view key) {
        const json& v = required(key);
        if (!v.is_number_unsigned()) parse_fail(path_of(key), "expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    std::string string(std::string_view key) { return as_string(required(key), path_of(key)); }

    bool boolean(std::string_view key) {
        const json& v = required(key);
        if (!v.is_boolean()) parse_fail(path_of(key), "expected a boolean");
        return v.get<bool>();
    }

    /// Rejects every field that was never asked for.
    void finish() const {
        for (auto it = object_.begin(); it != object_.end(); ++it) {
            if (!seen_.contains(it.key())) parse_fail(path_of(it.key()), "unknown field");
        }
    }

    static double as_number(const json& v, const std::string& path) {
        if (!v.is_number()) parse_fail(path, "expected a number");
        return v.get<double>();
    }

    static std::int64_t as_integer(const json& v, const std::string& path) {
        if (!v.is_number_integer()) parse_fail(path, "expected an integer");
        return v.get<std::int64_t>();
    }

    static std::string as_string(const json& v, const std::string& path) {
        if (!v.is_string()) parse_fail(path, "expected a string");
        return v.get<std::string>();
    }

private:
    const json& object_;
    std::string path_;
    std::set<std::string> seen_;
};

/// Canonical text: sorted keys, no whitespace, shortest round-trip doubles.
inline std::string canonical(const json& j) { return j.dump(); }

}  // namespace wr::detail
