// Copyright (c) 2026 taskseer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Parsing of HTCondor history files in the condor_history --json shape:
// a JSON array of flat objects, one class-ad per completed task.

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "taskseer/error.hpp"

namespace taskseer {

/// One class-ad attribute value. JSON null and the classad literal string
/// "undefined" both map to the undefined state; numerics stay numeric.
class AdValue {
public:
    struct Undefined {
        bool operator==(const Undefined&) const = default;
    };

    AdValue() : v_(Undefined{}) {}

    static AdValue undefined() { return AdValue(); }
    static AdValue integer(std::int64_t i) { return AdValue(Storage(i)); }
    static AdValue real(double d) { return AdValue(Storage(d)); }
    static AdValue boolean(bool b) { return AdValue(Storage(b)); }
    static AdValue string(std::string s) { return AdValue(Storage(std::move(s))); }

    bool is_undefined() const { return std::holds_alternative<Undefined>(v_); }
    bool is_integer() const { return std::holds_alternative<std::int64_t>(v_); }
    bool is_real() const { return std::holds_alternative<double>(v_); }
    bool is_boolean() const { return std::holds_alternative<bool>(v_); }
    bool is_string() const { return std::holds_alternative<std::string>(v_); }

    std::int64_t as_integer() const { return std::get<std::int64_t>(v_); }
    double as_real() const { return std::get<double>(v_); }
    bool as_boolean() const { return std::get<bool>(v_); }
    const std::string& as_string() const { return std::get<std::string>(v_); }

    /// Integer or real value widened to double; nullopt otherwise.
    std::optional<double> numeric() const {
        if (is_integer()) return static_cast<double>(as_integer());
        if (is_real()) return as_real();
        return std::nullopt;
    }

    bool operator==(const AdValue&) const = default;

    nlohmann::json to_json() const {
        if (is_integer()) return as_integer();
        if (is_real()) return as_real();
        if (is_boolean()) return as_boolean();
        if (is_string()) return as_string();
        return nullptr;
    }

    static AdValue from_json(const nlohmann::json& j) {
        switch (j.type()) {
        case nlohmann::json::value_t::number_integer:
            return integer(j.get<std::int64_t>());
        case nlohmann::json::value_t::number_unsigned: {
            auto u = j.get<std::uint64_t>();
            if (u <= static_cast<std::uint64_t>(INT64_MAX))
                return integer(static_cast<std::int64_t>(u));
            return real(static_cast<double>(u));
        }
        case nlohmann::json::value_t::number_float:
            return real(j.get<double>());
        case nlohmann::json::value_t::boolean:
            return boolean(j.get<bool>());
        case nlohmann::json::value_t::string: {
            auto s = j.get<std::string>();
            if (s == "undefined") return undefined();
            return string(std::move(s));
        }
        case nlohmann::json::value_t::null:
            return undefined();
        default:
            // Nested values do not occur in flat history output; keep the text.
            return string(j.dump());
        }
    }

private:
    using Storage = std::variant<Undefined, std::int64_t, double, bool, std::string>;
    explicit AdValue(Storage v) : v_(std::move(v)) {}
    Storage v_;
};

/// One history class-ad. Attribute names are unique keys; the sorted map
/// keeps every serialization of an ad deterministic.
using ClassAd = std::map<std::string, AdValue>;

inline const AdValue* find_attr(const ClassAd& ad, const std::string& name) {
    auto it = ad.find(name);
    return it == ad.end() ? nullptr : &it->second;
}

/// Result of parsing one history file. Elements that are unusable (not an
/// object, or missing ClusterId/ProcId) are skipped and counted rather than
/// aborting the ingest: production traces are dirty.
struct HistoryParse {
    std::vector<ClassAd> ads;
    std::size_t skipped = 0;
    std::vector<std::string> warnings;

    std::size_t source_elements() const { return ads.size() + skipped; }
};

inline HistoryParse parse_history_stream(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("history parse error at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (!doc.is_array())
        throw ParseError("history file is not a JSON array");

    HistoryParse out;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& el = doc[i];
        if (!el.is_object()) {
            ++out.skipped;
            out.warnings.push_back("element " + std::to_string(i) + ": not an object, skipped");
            continue;
        }
        if (!el.contains("ClusterId") || !el.contains("ProcId")) {
            ++out.skipped;
            out.warnings.push_back("element " + std::to_string(i) +
                                   ": missing ClusterId or ProcId, skipped");
            continue;
        }
        ClassAd ad;
        for (const auto& [key, value] : el.items())
            ad.emplace(key, AdValue::from_json(value));
        out.ads.push_back(std::move(ad));
    }
    return out;
}

inline HistoryParse parse_history_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open history file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_history_stream(buf.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

} // namespace taskseer
