// Copyright (c) 2026 taskseer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Per-task metric sampler over a procfs tree. All access goes through a
// configurable root path, so a fixture directory mirroring the procfs layout
// drives deterministic tests; the production default is the real /proc.
//
// Counters are reported raw (clock ticks, pages); the tick rate and page size
// appear once in the stream header so consumers can convert.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "json.hpp"

#include "taskseer/error.hpp"
#include "taskseer/text.hpp"

namespace taskseer::procfs {

/// The sampled process tree no longer exists.
struct TargetGoneError : Error {
    using Error::Error;
};

struct IoCounters {
    std::uint64_t rchar = 0;
    std::uint64_t wchar = 0;
    std::uint64_t syscr = 0;
    std::uint64_t syscw = 0;
    std::uint64_t read_bytes = 0;
    std::uint64_t write_bytes = 0;
    std::uint64_t cancelled_write_bytes = 0;

    bool operator==(const IoCounters&) const = default;

    IoCounters& operator+=(const IoCounters& o) {
        rchar += o.rchar;
        wchar += o.wchar;
        syscr += o.syscr;
        syscw += o.syscw;
        read_bytes += o.read_bytes;
        write_bytes += o.write_bytes;
        cancelled_write_bytes += o.cancelled_write_bytes;
        return *this;
    }
};

struct StatRecord {
    std::int64_t pid = 0;
    std::string comm;
    char state = '?';
    std::int64_t ppid = 0;
    std::uint64_t utime = 0; // clock ticks
    std::uint64_t stime = 0;
    std::int64_t num_threads = 0;
    std::uint64_t starttime = 0;

    bool operator==(const StatRecord&) const = default;
};

namespace detail {

/// Whole file contents, or nullopt when the file cannot be opened (the
/// process exited between listing and read — a transient miss, not an error).
inline std::optional<std::string> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
        return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad())
        return std::nullopt;
    return buf.str();
}

inline std::vector<std::string> whitespace_split(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n' || s[i] == '\r'))
            ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\n' && s[j] != '\r')
            ++j;
        if (j > i)
            out.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::uint64_t parse_counter(std::string_view s, const std::string& where) {
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError(where + ": bad counter value '" + std::string(s) + "'");
    return v;
}

} // namespace detail

/// Parse root/pid/io. All seven counters are required; unknown keys are
/// ignored. A missing file is a transient miss (nullopt).
inline std::optional<IoCounters> read_io(const std::filesystem::path& root, std::int64_t pid) {
    auto text = detail::slurp(root / std::to_string(pid) / "io");
    if (!text)
        return std::nullopt;
    IoCounters io;
    bool seen[7] = {};
    std::istringstream in(*text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        auto colon = line.find(':');
        if (colon == std::string::npos)
            throw ParseError("io line " + std::to_string(lineno) + ": missing ':' in '" + line + "'");
        std::string key = line.substr(0, colon);
        std::string_view value = std::string_view(line).substr(colon + 1);
        while (!value.empty() && value.front() == ' ')
            value.remove_prefix(1);
        const char* names[7] = {"rchar", "wchar", "syscr", "syscw",
                                "read_bytes", "write_bytes", "cancelled_write_bytes"};
        std::uint64_t* slots[7] = {&io.rchar, &io.wchar, &io.syscr, &io.syscw,
                                   &io.read_bytes, &io.write_bytes, &io.cancelled_write_bytes};
        for (int i = 0; i < 7; ++i) {
            if (key == names[i]) {
                *slots[i] = detail::parse_counter(value, "io line " + std::to_string(lineno));
                seen[i] = true;
                break;
            }
        }
    }
    const char* names[7] = {"rchar", "wchar", "syscr", "syscw",
                            "read_bytes", "write_bytes", "cancelled_write_bytes"};
    for (int i = 0; i < 7; ++i)
        if (!seen[i])
            throw ParseError(std::string("io: required key '") + names[i] + "' missing");
    return io;
}

/// Parse root/pid/stat. comm is everything between the first '(' and the
/// LAST ')': it may itself contain spaces and parentheses.
inline std::optional<StatRecord> read_stat(const std::filesystem::path& root, std::int64_t pid) {
    auto text = detail::slurp(root / std::to_string(pid) / "stat");
    if (!text)
        return std::nullopt;
    const std::string& s = *text;
    auto open = s.find('(');
    auto close = s.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open)
        throw ParseError("stat: no comm parentheses in '" + s + "'");
    StatRecord rec;
    try {
        rec.pid = parse_int(detail::whitespace_split(s.substr(0, open)).at(0));
    } catch (const std::exception&) {
        throw ParseError("stat: bad pid field in '" + s + "'");
    }
    rec.comm = s.substr(open + 1, close - open - 1);
    std::vector<std::string> rest = detail::whitespace_split(std::string_view(s).substr(close + 1));
    // rest[0] is field 3 (state); stat fields are 1-based in proc(5).
    auto field = [&](std::size_t number) -> const std::string& {
        if (number - 3 >= rest.size())
            throw ParseError("stat: too few fields (" + std::to_string(rest.size() + 2) + ")");
        return rest[number - 3];
    };
    const std::string& state = field(3);
    if (state.size() != 1)
        throw ParseError("stat: bad state field '" + state + "'");
    rec.state = state[0];
    rec.ppid = parse_int(field(4));
    rec.utime = detail::parse_counter(field(14), "stat utime");
    rec.stime = detail::parse_counter(field(15), "stat stime");
    rec.num_threads = parse_int(field(20));
    rec.starttime = detail::parse_counter(field(22), "stat starttime");
    return rec;
}

/// Resident pages: the second field of root/pid/statm.
inline std::optional<std::int64_t> read_statm(const std::filesystem::path& root, std::int64_t pid) {
    auto text = detail::slurp(root / std::to_string(pid) / "statm");
    if (!text)
        return std::nullopt;
    std::vector<std::string> fields = detail::whitespace_split(*text);
    if (fields.size() < 2)
        throw ParseError("statm: expected at least 2 fields, got " + std::to_string(fields.size()));
    return parse_int(fields[1]);
}

inline std::optional<std::int64_t> read_oom_score(const std::filesystem::path& root,
                                                  std::int64_t pid) {
    auto text = detail::slurp(root / std::to_string(pid) / "oom_score");
    if (!text)
        return std::nullopt;
    std::vector<std::string> fields = detail::whitespace_split(*text);
    if (fields.empty())
        throw ParseError("oom_score: empty file");
    return parse_int(fields[0]);
}

/// Transitive closure of child pids via root/PID/task/TID/children across all
/// task directories. Children that exited mid-walk stay listed (their reads
/// will miss); missing children files read as empty.
inline std::vector<std::int64_t> child_pids(const std::filesystem::path& root, std::int64_t pid) {
    std::set<std::int64_t> seen{pid};
    std::deque<std::int64_t> queue{pid};
    std::vector<std::int64_t> out;
    while (!queue.empty()) {
        std::int64_t p = queue.front();
        queue.pop_front();
        std::filesystem::path task_dir = root / std::to_string(p) / "task";
        std::error_code ec;
        if (!std::filesystem::is_directory(task_dir, ec))
            continue;
        std::vector<std::filesystem::path> tids;
        for (const auto& entry : std::filesystem::directory_iterator(task_dir, ec))
            tids.push_back(entry.path());
        std::sort(tids.begin(), tids.end());
        for (const std::filesystem::path& tid : tids) {
            auto text = detail::slurp(tid / "children");
            if (!text)
                continue;
            for (const std::string& child : detail::whitespace_split(*text)) {
                std::int64_t c = 0;
                auto res = std::from_chars(child.data(), child.data() + child.size(), c);
                if (res.ec != std::errc() || res.ptr != child.data() + child.size())
                    throw ParseError("children: bad pid '" + child + "'");
                if (seen.insert(c).second) {
                    queue.push_back(c);
                    out.push_back(c);
                }
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// One timestamped aggregate over a process tree. Pids whose files vanished
/// mid-sample contribute nothing to the sums and are listed in misses.
struct ProcSample {
    std::int64_t timestamp_ms = 0;
    std::int64_t root_pid = 0;
    std::vector<std::int64_t> pids; // root + descendants, sorted
    IoCounters io;
    std::uint64_t utime = 0;
    std::uint64_t stime = 0;
    std::int64_t rss_pages = 0;
    std::map<std::int64_t, std::int64_t> oom_scores;
    std::vector<std::int64_t> misses;
    std::vector<std::string> anomalies;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["kind"] = "sample";
        j["timestamp_ms"] = timestamp_ms;
        j["root_pid"] = root_pid;
        j["pids"] = pids;
        j["io"] = {{"rchar", io.rchar},
                   {"wchar", io.wchar},
                   {"syscr", io.syscr},
                   {"syscw", io.syscw},
                   {"read_bytes", io.read_bytes},
                   {"write_bytes", io.write_bytes},
                   {"cancelled_write_bytes", io.cancelled_write_bytes}};
        j["utime"] = utime;
        j["stime"] = stime;
        j["rss_pages"] = rss_pages;
        nlohmann::json scores = nlohmann::json::object();
        for (const auto& [p, score] : oom_scores)
            scores[std::to_string(p)] = score;
        j["oom_scores"] = std::move(scores);
        j["misses"] = misses;
        j["anomalies"] = anomalies;
        return j;
    }
};

inline ProcSample sample_tree(const std::filesystem::path& root, std::int64_t pid,
                              std::int64_t timestamp_ms) {
    std::error_code ec;
    if (!std::filesystem::is_directory(root / std::to_string(pid), ec))
        throw TargetGoneError("target pid " + std::to_string(pid) + " is gone");

    ProcSample sample;
    sample.timestamp_ms = timestamp_ms;
    sample.root_pid = pid;
    sample.pids.push_back(pid);
    for (std::int64_t child : child_pids(root, pid))
        sample.pids.push_back(child);
    std::sort(sample.pids.begin(), sample.pids.end());

    for (std::int64_t p : sample.pids) {
        auto io = read_io(root, p);
        auto stat = read_stat(root, p);
        auto rss = read_statm(root, p);
        auto oom = read_oom_score(root, p);
        if (!io || !stat || !rss || !oom) {
            sample.misses.push_back(p);
            continue;
        }
        sample.io += *io;
        sample.utime += stat->utime;
        sample.stime += stat->stime;
        sample.rss_pages += *rss;
        sample.oom_scores[p] = *oom;
    }
    return sample;
}

/// Once-at-start identity/context snapshot of the root pid. These files
/// (cmdline, cwd, environ, status) describe what is running rather than how
/// it is doing, so they are captured a single time, never per tick. Absent
/// files are simply omitted.
inline nlohmann::json snapshot_context(const std::filesystem::path& root, std::int64_t pid) {
    nlohmann::json j;
    j["kind"] = "snapshot";
    j["root_pid"] = pid;
    std::filesystem::path dir = root / std::to_string(pid);
    auto as_text = [](std::string s) {
        for (char& c : s)
            if (c == '\0')
                c = ' ';
        while (!s.empty() && (s.back() == ' ' || s.back() == '\n'))
            s.pop_back();
        return s;
    };
    if (auto cmdline = detail::slurp(dir / "cmdline"))
        j["cmdline"] = as_text(*cmdline);
    if (auto environ_text = detail::slurp(dir / "environ"))
        j["environ"] = as_text(*environ_text);
    if (auto status = detail::slurp(dir / "status"))
        j["status"] = *status;
    std::error_code ec;
    std::filesystem::path cwd = std::filesystem::read_symlink(dir / "cwd", ec);
    if (!ec)
        j["cwd"] = cwd.string();
    return j;
}

// ---------------------------------------------------------------------------
// Polling loop.

/// Time source, injectable so fixture tests control the tick sequence.
class Clock {
public:
    virtual ~Clock() = default;
    virtual std::int64_t now_ms() = 0;
    virtual void sleep_ms(std::int64_t ms) = 0;
};

/// Wall-clock start plus a steady offset: epoch-based yet monotone per tick.
class SteadyClock : public Clock {
public:
    SteadyClock()
        : start_wall_ms_(std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count()),
          start_(std::chrono::steady_clock::now()) {}

    std::int64_t now_ms() override {
        auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - start_)
                           .count();
        return start_wall_ms_ + elapsed;
    }

    void sleep_ms(std::int64_t ms) override {
        std::this_thread::sleep_for(std::chrono::milliseconds(ms));
    }

private:
    std::int64_t start_wall_ms_;
    std::chrono::steady_clock::time_point start_;
};

struct PollResult {
    std::size_t samples = 0;
};

/// Emit one JSONL sample per tick until the target exits (clean stop) or
/// max_ticks samples have been written (0 = unbounded). The first line is a
/// stream header carrying the tick rate and page size, optionally followed by
/// a context snapshot. Decreases in the cumulative counters are flagged in
/// the sample's anomalies, not dropped.
inline PollResult poll(const std::filesystem::path& root, std::int64_t pid,
                       std::int64_t interval_ms, std::ostream& sink, Clock& clock,
                       std::size_t max_ticks = 0, bool with_snapshot = false) {
    if (interval_ms < 10)
        throw ContractError("poll: interval_ms must be >= 10");

    nlohmann::json header;
    header["kind"] = "header";
    header["ticks_per_second"] = static_cast<std::int64_t>(sysconf(_SC_CLK_TCK));
    header["page_size"] = static_cast<std::int64_t>(sysconf(_SC_PAGESIZE));
    header["root_pid"] = pid;
    header["start_time_ms"] = clock.now_ms();
    sink << header.dump() << '\n';
    if (with_snapshot)
        sink << snapshot_context(root, pid).dump() << '\n';
    if (!sink)
        throw Error("poll: sample sink write failure");

    PollResult result;
    std::optional<ProcSample> prev;
    for (;;) {
        ProcSample sample;
        try {
            sample = sample_tree(root, pid, clock.now_ms());
        } catch (const TargetGoneError&) {
            break;
        }
        if (prev) {
            auto check = [&](const char* name, std::uint64_t before, std::uint64_t now) {
                if (now < before)
                    sample.anomalies.push_back(std::string(name) + " decreased: " +
                                               std::to_string(before) + " -> " +
                                               std::to_string(now));
            };
            check("rchar", prev->io.rchar, sample.io.rchar);
            check("wchar", prev->io.wchar, sample.io.wchar);
            check("utime", prev->utime, sample.utime);
            check("stime", prev->stime, sample.stime);
        }
        sink << sample.to_json().dump() << '\n';
        if (!sink)
            throw Error("poll: sample sink write failure");
        prev = std::move(sample);
        ++result.samples;
        if (max_ticks != 0 && result.samples >= max_ticks)
            break;
        clock.sleep_ms(interval_ms);
    }
    return result;
}

} // namespace taskseer::procfs
