// Copyright (c) 2026 taskseer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Submission grouping, the five-way submission taxonomy, failure-mode
// classification, usage aggregates, and the breakdown report tables.

#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <utility>
#include <vector>

#include "taskseer/task_record.hpp"

namespace taskseer {

enum class Outcome { Failed, Succeeded, Indeterminate };

/// Terminal outcome of one task. JobStatus 4 (completed) counts as success,
/// JobStatus 3 (removed) as failure; anything else is indeterminate and is
/// excluded from the modeling dataset.
inline Outcome label_of(const TaskRecord& t) {
    if (t.job_status == 4) return Outcome::Succeeded;
    if (t.job_status == 3) return Outcome::Failed;
    return Outcome::Indeterminate;
}

inline const char* to_string(Outcome o) {
    switch (o) {
    case Outcome::Failed: return "Failed";
    case Outcome::Succeeded: return "Succeeded";
    default: return "Indeterminate";
    }
}

enum class Category : int {
    SingleSuccess = 0,
    SingleFail = 1,
    MultiAllSuccess = 2,
    MultiAllFail = 3,
    MultiMixed = 4,
};
inline constexpr std::size_t kCategoryCount = 5;

inline const char* to_string(Category c) {
    switch (c) {
    case Category::SingleSuccess: return "SingleSuccess";
    case Category::SingleFail: return "SingleFail";
    case Category::MultiAllSuccess: return "MultiAllSuccess";
    case Category::MultiAllFail: return "MultiAllFail";
    default: return "MultiMixed";
    }
}

struct SubmissionGroup {
    std::int64_t cluster_id = 0;
    std::string source_node;
    std::vector<TaskRecord> tasks;
    Category category = Category::SingleSuccess;
};

/// Five-way category of one submission. Indeterminate tasks count as failed
/// here: the taxonomy covers terminal outcomes only and a non-terminal record
/// in a history file is not a success.
inline Category classify_submission(const SubmissionGroup& group) {
    if (group.tasks.empty())
        throw ContractError("classify_submission: empty group");
    std::size_t succeeded = 0;
    for (const TaskRecord& t : group.tasks)
        if (label_of(t) == Outcome::Succeeded)
            ++succeeded;
    if (group.tasks.size() == 1)
        return succeeded == 1 ? Category::SingleSuccess : Category::SingleFail;
    if (succeeded == group.tasks.size())
        return Category::MultiAllSuccess;
    if (succeeded == 0)
        return Category::MultiAllFail;
    return Category::MultiMixed;
}

/// Partition tasks into submissions keyed by (source_node, cluster_id),
/// sorted by key, with the category filled in.
inline std::vector<SubmissionGroup> group_by_submission(const std::vector<TaskRecord>& tasks) {
    std::map<std::pair<std::string, std::int64_t>, SubmissionGroup> groups;
    for (const TaskRecord& t : tasks) {
        SubmissionGroup& g = groups[{t.source_node, t.cluster_id}];
        if (g.tasks.empty()) {
            g.cluster_id = t.cluster_id;
            g.source_node = t.source_node;
        }
        g.tasks.push_back(t);
    }
    std::vector<SubmissionGroup> out;
    out.reserve(groups.size());
    for (auto& [key, group] : groups) {
        group.category = classify_submission(group);
        out.push_back(std::move(group));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Failure-mode classification.

enum class FailureKind : int {
    RemovedBeforeScheduled = 0,
    AttributeExpressionError = 1,
    UserLogInitFailure = 2,
    OutOfMemory = 3,
    NoSuchFileOrDirectory = 4,
    Other = 5,
};
inline constexpr std::size_t kFailureKindCount = 6;

inline const char* to_string(FailureKind k) {
    switch (k) {
    case FailureKind::RemovedBeforeScheduled: return "RemovedBeforeScheduled";
    case FailureKind::AttributeExpressionError: return "AttributeExpressionError";
    case FailureKind::UserLogInitFailure: return "UserLogInitFailure";
    case FailureKind::OutOfMemory: return "OutOfMemory";
    case FailureKind::NoSuchFileOrDirectory: return "NoSuchFileOrDirectory";
    default: return "Other";
    }
}

/// Match patterns for the failure buckets. The buckets are fixed; the text
/// that lands a reason string in a bucket varies by site, so the patterns are
/// configurable (case-insensitive ECMAScript regex).
struct FailureRules {
    std::string attr_expr_pattern = "attribute.*expression|expression error|invalid expression";
    std::string user_log_pattern = "initialize user log";
    std::string oom_pattern = "memory usage exceeded|out of memory|memory limit";
    std::string no_file_pattern = "no such file or directory";

    FailureRules() = default;
    FailureRules(std::string attr_expr, std::string user_log, std::string oom, std::string no_file)
        : attr_expr_pattern(std::move(attr_expr)), user_log_pattern(std::move(user_log)),
          oom_pattern(std::move(oom)), no_file_pattern(std::move(no_file)) {}

    const std::regex& attr_expr() const { return compiled(0, attr_expr_pattern); }
    const std::regex& user_log() const { return compiled(1, user_log_pattern); }
    const std::regex& oom() const { return compiled(2, oom_pattern); }
    const std::regex& no_file() const { return compiled(3, no_file_pattern); }

private:
    mutable std::array<std::optional<std::regex>, 4> cache_;
    const std::regex& compiled(std::size_t i, const std::string& pattern) const {
        if (!cache_[i]) {
            try {
                cache_[i] = std::regex(pattern, std::regex::icase);
            } catch (const std::regex_error& e) {
                throw Error("invalid failure-rule pattern '" + pattern + "': " + e.what());
            }
        }
        return *cache_[i];
    }
};

/// Rule cascade over the reason strings; first match wins.
inline FailureKind classify_failure(const TaskRecord& t, const FailureRules& rules = {}) {
    bool never_started = !t.num_job_starts.has_value() || *t.num_job_starts == 0;
    if (t.remove_reason && never_started)
        return FailureKind::RemovedBeforeScheduled;

    const std::string remove = t.remove_reason.value_or("");
    const std::string hold = t.last_hold_reason.value_or("");
    auto matches = [](const std::string& s, const std::regex& re) {
        return !s.empty() && std::regex_search(s, re);
    };
    if (matches(remove, rules.attr_expr()) || matches(hold, rules.attr_expr()))
        return FailureKind::AttributeExpressionError;
    if (matches(remove, rules.user_log()) || matches(hold, rules.user_log()))
        return FailureKind::UserLogInitFailure;
    if (matches(hold, rules.oom()))
        return FailureKind::OutOfMemory;
    if (matches(remove, rules.no_file()) || matches(hold, rules.no_file()))
        return FailureKind::NoSuchFileOrDirectory;
    return FailureKind::Other;
}

// ---------------------------------------------------------------------------
// Usage aggregates.

struct UsageStat {
    std::string attribute;
    double cumulative = 0.0;
    double average = 0.0;
    double max = 0.0;
    double min = 0.0;
    std::size_t count = 0;             // tasks where the attribute is defined
    std::size_t undefined_excluded = 0;

    bool defined() const { return count > 0; }
};

/// Aggregate a numeric class-ad attribute over the tasks where it is defined.
/// Never-defined attributes yield count 0 with the aggregates flagged off.
inline UsageStat usage_summary(const std::vector<TaskRecord>& tasks, const std::string& attribute) {
    UsageStat s;
    s.attribute = attribute;
    for (const TaskRecord& t : tasks) {
        const AdValue* v = find_attr(t.raw, attribute);
        std::optional<double> x = v ? v->numeric() : std::nullopt;
        if (!x) {
            ++s.undefined_excluded;
            continue;
        }
        if (s.count == 0) {
            s.min = s.max = *x;
        } else {
            s.min = std::min(s.min, *x);
            s.max = std::max(s.max, *x);
        }
        s.cumulative += *x;
        ++s.count;
    }
    s.average = s.count ? s.cumulative / static_cast<double>(s.count) : 0.0;
    return s;
}

// ---------------------------------------------------------------------------
// Breakdown report.

struct BreakdownTables {
    std::size_t tasks_total = 0;
    std::size_t tasks_succeeded = 0;
    std::size_t tasks_failed = 0; // includes indeterminate, counted as failed
    std::array<std::size_t, kFailureKindCount> failure_kinds{};
    std::array<std::size_t, kCategoryCount> submissions_by_category{};
    std::array<std::size_t, kCategoryCount> tasks_by_category{};
    std::size_t submissions_total = 0;
};

inline BreakdownTables breakdown_report(const std::vector<SubmissionGroup>& groups,
                                        const FailureRules& rules = {}) {
    BreakdownTables b;
    b.submissions_total = groups.size();
    for (const SubmissionGroup& g : groups) {
        auto c = static_cast<std::size_t>(g.category);
        b.submissions_by_category[c] += 1;
        b.tasks_by_category[c] += g.tasks.size();
        for (const TaskRecord& t : g.tasks) {
            ++b.tasks_total;
            if (label_of(t) == Outcome::Succeeded) {
                ++b.tasks_succeeded;
            } else {
                ++b.tasks_failed;
                b.failure_kinds[static_cast<std::size_t>(classify_failure(t, rules))] += 1;
            }
        }
    }
    return b;
}

namespace detail {

inline double percent(std::size_t part, std::size_t whole) {
    return whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

/// One decimal place, mirroring the report convention.
inline std::string percent_str(std::size_t part, std::size_t whole) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", percent(part, whole));
    return buf;
}

} // namespace detail

/// Display order mirrors the usual report layout: singles first, then the
/// mixed multi-task bucket, then the uniform multi-task buckets.
inline constexpr std::array<Category, kCategoryCount> kCategoryDisplayOrder = {
    Category::SingleSuccess, Category::SingleFail,     Category::MultiMixed,
    Category::MultiAllSuccess, Category::MultiAllFail,
};

inline const char* category_description(Category c) {
    switch (c) {
    case Category::SingleSuccess: return "single task, succeeded";
    case Category::SingleFail: return "single task, failed";
    case Category::MultiAllSuccess: return "multi task, all succeeded";
    case Category::MultiAllFail: return "multi task, all failed";
    default: return "multi task, mixed success and failure";
    }
}

inline std::string render_breakdown_text(const BreakdownTables& b) {
    std::string out;
    char line[256];
    auto row = [&](const char* fmt, auto... args) {
        std::snprintf(line, sizeof line, fmt, args...);
        out += line;
        out += '\n';
    };

    out += "Task breakdown\n";
    row("  %8zu  %6s%%  %s", b.tasks_succeeded, detail::percent_str(b.tasks_succeeded, b.tasks_total).c_str(),
        "succeeded");
    row("  %8zu  %6s%%  %s", b.tasks_failed, detail::percent_str(b.tasks_failed, b.tasks_total).c_str(),
        "failed or removed");
    row("  %8zu  %6s%%  %s", b.tasks_total, detail::percent_str(b.tasks_total, b.tasks_total).c_str(),
        "all tasks");
    out += "\nTask error breakdown\n";
    for (std::size_t k = 0; k < kFailureKindCount; ++k) {
        row("  %8zu  %6s%%  %s", b.failure_kinds[k],
            detail::percent_str(b.failure_kinds[k], b.tasks_total).c_str(),
            to_string(static_cast<FailureKind>(k)));
    }
    row("  %8zu  %6s%%  %s", b.tasks_failed, detail::percent_str(b.tasks_failed, b.tasks_total).c_str(),
        "all task errors");
    out += "\nSubmission breakdown\n";
    for (Category c : kCategoryDisplayOrder) {
        auto i = static_cast<std::size_t>(c);
        row("  %8zu  %6s%%  %8zu  %6s%%  %s", b.submissions_by_category[i],
            detail::percent_str(b.submissions_by_category[i], b.submissions_total).c_str(),
            b.tasks_by_category[i], detail::percent_str(b.tasks_by_category[i], b.tasks_total).c_str(),
            category_description(c));
    }
    row("  %8zu  %6s%%  %8zu  %6s%%  %s", b.submissions_total,
        detail::percent_str(b.submissions_total, b.submissions_total).c_str(), b.tasks_total,
        detail::percent_str(b.tasks_total, b.tasks_total).c_str(), "all submissions");
    return out;
}

inline std::string render_usage_text(const std::vector<UsageStat>& stats) {
    std::string out = "Task usage\n";
    char line[320];
    for (const UsageStat& s : stats) {
        if (!s.defined()) {
            std::snprintf(line, sizeof line, "  %-28s  never defined (%zu tasks excluded)\n",
                          s.attribute.c_str(), s.undefined_excluded);
        } else {
            std::snprintf(line, sizeof line,
                          "  %-28s  cumulative %.2f  average %.2f  max %.2f  min %.2f  count %zu\n",
                          s.attribute.c_str(), s.cumulative, s.average, s.max, s.min, s.count);
        }
        out += line;
    }
    return out;
}

// CSV emitters. One file per table, fixed columns, suitable for diffing.

inline void write_tasks_breakdown_csv(const BreakdownTables& b, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "outcome,count,percent\n";
    out << "succeeded," << b.tasks_succeeded << ',' << detail::percent_str(b.tasks_succeeded, b.tasks_total) << '\n';
    out << "failed," << b.tasks_failed << ',' << detail::percent_str(b.tasks_failed, b.tasks_total) << '\n';
    out << "total," << b.tasks_total << ',' << detail::percent_str(b.tasks_total, b.tasks_total) << '\n';
}

inline void write_errors_breakdown_csv(const BreakdownTables& b, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "kind,count,percent_of_all_tasks\n";
    for (std::size_t k = 0; k < kFailureKindCount; ++k)
        out << to_string(static_cast<FailureKind>(k)) << ',' << b.failure_kinds[k] << ','
            << detail::percent_str(b.failure_kinds[k], b.tasks_total) << '\n';
    out << "total," << b.tasks_failed << ',' << detail::percent_str(b.tasks_failed, b.tasks_total) << '\n';
}

inline void write_submissions_breakdown_csv(const BreakdownTables& b,
                                            const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "category,submissions,submissions_percent,tasks,tasks_percent\n";
    for (Category c : kCategoryDisplayOrder) {
        auto i = static_cast<std::size_t>(c);
        out << to_string(c) << ',' << b.submissions_by_category[i] << ','
            << detail::percent_str(b.submissions_by_category[i], b.submissions_total) << ','
            << b.tasks_by_category[i] << ',' << detail::percent_str(b.tasks_by_category[i], b.tasks_total)
            << '\n';
    }
    out << "total," << b.submissions_total << ",100.0," << b.tasks_total << ",100.0\n";
}

inline void write_usage_summary_csv(const std::vector<UsageStat>& stats,
                                    const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "attribute,cumulative,average,max,min,count,undefined_excluded\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    for (const UsageStat& s : stats) {
        if (!s.defined()) {
            out << s.attribute << ",,,,,0," << s.undefined_excluded << '\n';
        } else {
            out << s.attribute << ',' << num(s.cumulative) << ',' << num(s.average) << ','
                << num(s.max) << ',' << num(s.min) << ',' << s.count << ',' << s.undefined_excluded
                << '\n';
        }
    }
}

} // namespace taskseer
