// Copyright (c) 2026 taskseer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Normalized task records, deduplicating merge across submit nodes, and the
// JSONL task store.

#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "taskseer/classad.hpp"

namespace taskseer {

/// One normalized task. Well-known attributes are extracted and typed; every
/// other attribute stays in raw for feature extraction.
struct TaskRecord {
    std::int64_t cluster_id = 0;
    std::int64_t proc_id = 0;
    std::optional<std::int64_t> job_status;
    std::optional<std::int64_t> exit_code;
    std::optional<std::string> remove_reason;
    std::optional<std::string> last_hold_reason;
    std::optional<std::int64_t> num_job_starts;
    std::string source_node;
    ClassAd raw;

    bool operator==(const TaskRecord&) const = default;

    using Key = std::tuple<std::string, std::int64_t, std::int64_t>;
    Key key() const { return {source_node, cluster_id, proc_id}; }

    /// CompletionDate from raw, or nullopt. Used by the merge's latest-wins rule.
    std::optional<std::int64_t> completion_date() const {
        const AdValue* v = find_attr(raw, "CompletionDate");
        if (v && v->is_integer()) return v->as_integer();
        return std::nullopt;
    }
};

namespace detail {

inline std::int64_t require_integer_attr(const ClassAd& ad, const char* name) {
    const AdValue* v = find_attr(ad, name);
    if (!v)
        throw Error(std::string("normalize: missing attribute ") + name);
    if (!v->is_integer())
        throw Error(std::string("normalize: attribute ") + name + " is not an integer");
    return v->as_integer();
}

} // namespace detail

/// Extract the well-known fields from one class-ad. The ad must contain
/// ClusterId and ProcId; non-integer ClusterId/ProcId/JobStatus is an error.
/// Optional fields of the wrong type are left untouched in raw.
inline TaskRecord normalize_task(const ClassAd& ad, std::string source_node) {
    TaskRecord t;
    t.source_node = std::move(source_node);
    t.cluster_id = detail::require_integer_attr(ad, "ClusterId");
    t.proc_id = detail::require_integer_attr(ad, "ProcId");
    t.raw = ad;
    t.raw.erase("ClusterId");
    t.raw.erase("ProcId");

    if (const AdValue* v = find_attr(ad, "JobStatus")) {
        if (!v->is_integer())
            throw Error("normalize: attribute JobStatus is not an integer");
        std::int64_t s = v->as_integer();
        if (s < 1 || s > 7)
            throw Error("normalize: JobStatus " + std::to_string(s) + " out of range 1..7");
        t.job_status = s;
        t.raw.erase("JobStatus");
    }
    auto take_int = [&](const char* name, std::optional<std::int64_t>& dst) {
        if (const AdValue* v = find_attr(ad, name); v && v->is_integer()) {
            dst = v->as_integer();
            t.raw.erase(name);
        }
    };
    auto take_string = [&](const char* name, std::optional<std::string>& dst) {
        if (const AdValue* v = find_attr(ad, name); v && v->is_string()) {
            dst = v->as_string();
            t.raw.erase(name);
        }
    };
    take_int("ExitCode", t.exit_code);
    take_int("NumJobStarts", t.num_job_starts);
    take_string("RemoveReason", t.remove_reason);
    take_string("LastHoldReason", t.last_hold_reason);
    return t;
}

struct NodeTasks {
    std::string source_node;
    std::vector<TaskRecord> tasks;
};

struct MergeResult {
    std::vector<TaskRecord> tasks; // sorted by (source_node, cluster_id, proc_id)
    std::size_t duplicates_dropped = 0;
};

/// Concatenate per-node task lists and deduplicate on the task key. History
/// records are terminal snapshots, so the record with the larger
/// CompletionDate wins; a tie falls back to comparing the canonical JSON
/// serialization so the result is independent of file order.
inline nlohmann::json task_to_json(const TaskRecord& t);

inline MergeResult merge_sources(const std::vector<NodeTasks>& per_node) {
    std::map<TaskRecord::Key, TaskRecord> store;
    MergeResult out;
    for (const NodeTasks& node : per_node) {
        for (const TaskRecord& task : node.tasks) {
            auto [it, inserted] = store.emplace(task.key(), task);
            if (inserted)
                continue;
            ++out.duplicates_dropped;
            std::int64_t held = it->second.completion_date().value_or(INT64_MIN);
            std::int64_t cand = task.completion_date().value_or(INT64_MIN);
            if (cand > held ||
                (cand == held && task_to_json(task).dump() > task_to_json(it->second).dump())) {
                it->second = task;
            }
        }
    }
    out.tasks.reserve(store.size());
    for (auto& [key, task] : store)
        out.tasks.push_back(std::move(task));
    return out;
}

// ---------------------------------------------------------------------------
// JSONL store: one task object per line.

inline nlohmann::json task_to_json(const TaskRecord& t) {
    nlohmann::json j;
    j["cluster_id"] = t.cluster_id;
    j["proc_id"] = t.proc_id;
    j["job_status"] = t.job_status ? nlohmann::json(*t.job_status) : nlohmann::json(nullptr);
    j["exit_code"] = t.exit_code ? nlohmann::json(*t.exit_code) : nlohmann::json(nullptr);
    j["remove_reason"] = t.remove_reason ? nlohmann::json(*t.remove_reason) : nlohmann::json(nullptr);
    j["last_hold_reason"] =
        t.last_hold_reason ? nlohmann::json(*t.last_hold_reason) : nlohmann::json(nullptr);
    j["num_job_starts"] =
        t.num_job_starts ? nlohmann::json(*t.num_job_starts) : nlohmann::json(nullptr);
    j["source_node"] = t.source_node;
    nlohmann::json raw = nlohmann::json::object();
    for (const auto& [name, value] : t.raw)
        raw[name] = value.to_json();
    j["raw"] = std::move(raw);
    return j;
}

inline TaskRecord task_from_json(const nlohmann::json& j) {
    TaskRecord t;
    t.cluster_id = j.at("cluster_id").get<std::int64_t>();
    t.proc_id = j.at("proc_id").get<std::int64_t>();
    auto opt_int = [&](const char* key) -> std::optional<std::int64_t> {
        const auto& v = j.at(key);
        if (v.is_null()) return std::nullopt;
        return v.get<std::int64_t>();
    };
    auto opt_str = [&](const char* key) -> std::optional<std::string> {
        const auto& v = j.at(key);
        if (v.is_null()) return std::nullopt;
        return v.get<std::string>();
    };
    t.job_status = opt_int("job_status");
    t.exit_code = opt_int("exit_code");
    t.remove_reason = opt_str("remove_reason");
    t.last_hold_reason = opt_str("last_hold_reason");
    t.num_job_starts = opt_int("num_job_starts");
    t.source_node = j.at("source_node").get<std::string>();
    for (const auto& [name, value] : j.at("raw").items())
        t.raw.emplace(name, AdValue::from_json(value));
    return t;
}

inline void write_tasks_jsonl(const std::vector<TaskRecord>& tasks, std::ostream& out) {
    for (const TaskRecord& t : tasks)
        out << task_to_json(t).dump() << '\n';
    if (!out)
        throw Error("task store: write failure");
}

inline std::vector<TaskRecord> read_tasks_jsonl(std::istream& in) {
    std::vector<TaskRecord> tasks;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        try {
            tasks.push_back(task_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("task store line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return tasks;
}

} // namespace taskseer
