// Copyright (c) 2026 taskseer contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "taskseer/error.hpp"

namespace taskseer {

/// Shortest decimal form that parses back to the identical double. All
/// persisted numbers go through this so stores and models are byte-stable
/// and round-trip losslessly.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError("not a number: '" + std::string(s) + "'");
    return v;
}

inline std::int64_t parse_int(std::string_view s) {
    std::int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError("not an integer: '" + std::string(s) + "'");
    return v;
}

// ---------------------------------------------------------------------------
// Minimal CSV with full quoting (embedded commas, quotes, newlines).

inline std::string csv_quote(std::string_view s) {
    std::string out;
    out.reserve(s.size() + 2);
    out += '"';
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

/// One parsed CSV field. `quoted` lets callers distinguish an empty quoted
/// string from an absent (missing) cell.
struct CsvField {
    std::string text;
    bool quoted = false;
};

/// Parse one CSV record starting at `pos`; advances `pos` past the record's
/// terminating newline (or to end of input). Returns false at end of input.
inline bool csv_read_record(std::string_view text, std::size_t& pos,
                            std::vector<CsvField>& fields) {
    fields.clear();
    if (pos >= text.size())
        return false;
    CsvField cur;
    bool in_quotes = false;
    while (pos < text.size()) {
        char c = text[pos];
        if (in_quotes) {
            if (c == '"') {
                if (pos + 1 < text.size() && text[pos + 1] == '"') {
                    cur.text += '"';
                    pos += 2;
                } else {
                    in_quotes = false;
                    ++pos;
                }
            } else {
                cur.text += c;
                ++pos;
            }
        } else if (c == '"') {
            in_quotes = true;
            cur.quoted = true;
            ++pos;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur = {};
            ++pos;
        } else if (c == '\n') {
            ++pos;
            fields.push_back(std::move(cur));
            return true;
        } else if (c == '\r') {
            ++pos; // tolerate CRLF
        } else {
            cur.text += c;
            ++pos;
        }
    }
    if (in_quotes)
        throw ParseError("csv: unterminated quoted field");
    fields.push_back(std::move(cur));
    return true;
}

} // namespace taskseer
