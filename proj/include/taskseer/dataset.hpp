// Copyright (c) 2026 taskseer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Modeling-population selection, the mixed-type feature matrix, split-frame
// and fold assignment, and the on-disk dataset store.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "taskseer/categorize.hpp"
#include "taskseer/rng.hpp"
#include "taskseer/text.hpp"

namespace taskseer {

enum class FeatureKind { Numeric, Categorical, Boolean };

inline const char* to_string(FeatureKind k) {
    switch (k) {
    case FeatureKind::Numeric: return "Numeric";
    case FeatureKind::Categorical: return "Categorical";
    default: return "Boolean";
    }
}

inline FeatureKind feature_kind_from_string(const std::string& s) {
    if (s == "Numeric") return FeatureKind::Numeric;
    if (s == "Categorical") return FeatureKind::Categorical;
    if (s == "Boolean") return FeatureKind::Boolean;
    throw ParseError("unknown feature kind: " + s);
}

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::Numeric;
    bool ignored = false;
};

/// Ignore-list helper: specs that suppress the named columns.
inline std::vector<FeatureSpec> ignore_specs(const std::vector<std::string>& names) {
    std::vector<FeatureSpec> specs;
    specs.reserve(names.size());
    for (const std::string& n : names)
        specs.push_back({n, FeatureKind::Numeric, true});
    return specs;
}

/// One feature column. Numeric values live in `num`; categorical and boolean
/// values are dictionary ids in `cat` (booleans use the fixed dictionary
/// {false,true}). Missing cells are flagged, never imputed.
struct Column {
    FeatureSpec spec;
    std::vector<double> num;
    std::vector<std::int32_t> cat;
    std::vector<std::string> categories;
    std::vector<std::uint8_t> missing;

    bool is_numeric() const { return spec.kind == FeatureKind::Numeric; }
    std::size_t category_count() const { return categories.size(); }
};

struct RowMeta {
    std::string source_node;
    std::int64_t cluster_id = 0;
    std::int64_t proc_id = 0;
    bool operator==(const RowMeta&) const = default;
};

namespace detail {

/// FNV-1a over column names, kinds and category dictionaries. Shared by the
/// dataset store and the model file so a model refuses foreign schemas.
class SchemaHasher {
public:
    void column(const std::string& name, FeatureKind kind,
                const std::vector<std::string>& categories) {
        feed(name);
        feed(to_string(kind));
        for (const std::string& c : categories)
            feed(c);
    }
    std::uint64_t value() const { return h_; }

private:
    void feed(std::string_view s) {
        for (unsigned char c : s) {
            h_ ^= c;
            h_ *= 0x100000001b3ULL;
        }
        h_ ^= 0x1f;
        h_ *= 0x100000001b3ULL;
    }
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

} // namespace detail

enum class SplitPart : std::uint8_t { Train = 0, Valid = 1, Test = 2 };

inline const char* to_string(SplitPart s) {
    switch (s) {
    case SplitPart::Train: return "Train";
    case SplitPart::Valid: return "Valid";
    default: return "Test";
    }
}

inline SplitPart split_part_from_string(const std::string& s) {
    if (s == "Train") return SplitPart::Train;
    if (s == "Valid") return SplitPart::Valid;
    if (s == "Test") return SplitPart::Test;
    throw ParseError("unknown split name: " + s);
}

struct Dataset {
    std::vector<Column> columns;
    std::vector<Outcome> labels; // Failed / Succeeded only
    std::vector<RowMeta> row_meta;
    std::vector<SplitPart> split; // total; defaults to Train until assigned
    std::vector<std::int32_t> fold;

    std::size_t n_rows() const { return labels.size(); }
    std::size_t n_features() const { return columns.size(); }

    std::optional<std::size_t> column_index(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i].spec.name == name)
                return i;
        return std::nullopt;
    }

    std::vector<std::uint32_t> rows_of_split(SplitPart part) const {
        std::vector<std::uint32_t> rows;
        for (std::size_t i = 0; i < split.size(); ++i)
            if (split[i] == part)
                rows.push_back(static_cast<std::uint32_t>(i));
        return rows;
    }

    std::vector<std::uint32_t> all_rows() const {
        std::vector<std::uint32_t> rows(n_rows());
        std::iota(rows.begin(), rows.end(), 0u);
        return rows;
    }

    /// Schema fingerprint over names, kinds and category dictionaries.
    /// Models refuse rows from a dataset with a different fingerprint.
    std::uint64_t fingerprint() const;
};

inline std::uint64_t Dataset::fingerprint() const {
    detail::SchemaHasher hasher;
    for (const Column& c : columns)
        hasher.column(c.spec.name, c.spec.kind, c.categories);
    return hasher.value();
}

// ---------------------------------------------------------------------------
// Modeling-population selection.

struct SelectionResult {
    std::vector<TaskRecord> tasks;
    std::size_t qualifying_groups = 0;
    std::size_t indeterminate_dropped = 0;
};

/// The modeling population: tasks from mixed-outcome multi-task submissions
/// with at least `min_tasks` tasks. Indeterminate tasks are dropped (counted);
/// the size cutoff applies to the submission's full task count.
inline SelectionResult select_training_population(const std::vector<SubmissionGroup>& groups,
                                                  std::size_t min_tasks = 5) {
    if (min_tasks < 2)
        throw ContractError("select_training_population: min_tasks must be >= 2");
    SelectionResult out;
    for (const SubmissionGroup& g : groups) {
        if (g.category != Category::MultiMixed || g.tasks.size() < min_tasks)
            continue;
        ++out.qualifying_groups;
        for (const TaskRecord& t : g.tasks) {
            if (label_of(t) == Outcome::Indeterminate)
                ++out.indeterminate_dropped;
            else
                out.tasks.push_back(t);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Feature matrix construction.

struct BuildOptions {
    std::size_t max_categories = 10000;
};

struct BuildReport {
    std::vector<std::string> warnings;
};

namespace detail {

inline std::string advalue_as_category(const AdValue& v) {
    if (v.is_string()) return v.as_string();
    if (v.is_integer()) return std::to_string(v.as_integer());
    if (v.is_real()) return format_double(v.as_real());
    if (v.is_boolean()) return v.as_boolean() ? "true" : "false";
    return {};
}

} // namespace detail

/// Build the feature matrix: one row per task, one column per class-ad
/// attribute that survives the ignore list. The extracted well-known fields
/// ExitCode, RemoveReason, LastHoldReason and NumJobStarts rejoin the feature
/// universe under their attribute names; identity fields (ClusterId, ProcId,
/// source node) and the label source JobStatus do not.
///
/// Column kinds follow the spec entry when one names the column, otherwise
/// they are inferred: all-numeric values -> Numeric, all-boolean -> Boolean,
/// anything else -> Categorical.
inline Dataset build_dataset(const std::vector<TaskRecord>& tasks,
                             const std::vector<FeatureSpec>& spec, BuildOptions options = {},
                             BuildReport* report = nullptr) {
    if (tasks.empty())
        throw Error("build_dataset: empty dataset (no input rows)");

    std::map<std::string, const FeatureSpec*> spec_by_name;
    for (const FeatureSpec& s : spec)
        spec_by_name[s.name] = &s;

    const std::size_t n = tasks.size();

    // Per-row attribute values, including the re-injected extracted fields.
    auto value_at = [](const TaskRecord& t, const std::string& name) -> std::optional<AdValue> {
        if (name == "ExitCode")
            return t.exit_code ? std::optional(AdValue::integer(*t.exit_code)) : std::nullopt;
        if (name == "NumJobStarts")
            return t.num_job_starts ? std::optional(AdValue::integer(*t.num_job_starts))
                                    : std::nullopt;
        if (name == "RemoveReason")
            return t.remove_reason ? std::optional(AdValue::string(*t.remove_reason)) : std::nullopt;
        if (name == "LastHoldReason")
            return t.last_hold_reason ? std::optional(AdValue::string(*t.last_hold_reason))
                                      : std::nullopt;
        const AdValue* v = find_attr(t.raw, name);
        if (!v || v->is_undefined())
            return std::nullopt;
        return *v;
    };

    std::set<std::string> names;
    for (const TaskRecord& t : tasks)
        for (const auto& [name, value] : t.raw)
            names.insert(name);
    for (const TaskRecord& t : tasks) {
        if (t.exit_code) names.insert("ExitCode");
        if (t.num_job_starts) names.insert("NumJobStarts");
        if (t.remove_reason) names.insert("RemoveReason");
        if (t.last_hold_reason) names.insert("LastHoldReason");
    }
    // A spec entry may name a column absent from every task; such columns are
    // dropped below with a warning rather than silently producing all-missing.
    for (const FeatureSpec& s : spec)
        if (!s.ignored)
            names.insert(s.name);

    Dataset ds;
    ds.labels.reserve(n);
    ds.row_meta.reserve(n);
    for (const TaskRecord& t : tasks) {
        Outcome label = label_of(t);
        if (label == Outcome::Indeterminate)
            throw ContractError("build_dataset: task " + t.source_node + "/" +
                                std::to_string(t.cluster_id) + "." + std::to_string(t.proc_id) +
                                " has an indeterminate label");
        ds.labels.push_back(label);
        ds.row_meta.push_back({t.source_node, t.cluster_id, t.proc_id});
    }
    ds.split.assign(n, SplitPart::Train);
    ds.fold.assign(n, 0);

    for (const std::string& name : names) {
        const FeatureSpec* s = nullptr;
        if (auto it = spec_by_name.find(name); it != spec_by_name.end())
            s = it->second;
        if (s && s->ignored)
            continue;

        std::vector<std::optional<AdValue>> values(n);
        std::size_t defined = 0;
        bool all_numeric = true, all_boolean = true;
        for (std::size_t i = 0; i < n; ++i) {
            values[i] = value_at(tasks[i], name);
            if (!values[i])
                continue;
            ++defined;
            if (!values[i]->numeric()) all_numeric = false;
            if (!values[i]->is_boolean()) all_boolean = false;
        }
        if (defined == 0) {
            if (report)
                report->warnings.push_back("column " + name + ": defined on no rows, dropped");
            continue;
        }

        FeatureKind kind;
        if (s)
            kind = s->kind;
        else if (all_numeric)
            kind = FeatureKind::Numeric;
        else if (all_boolean)
            kind = FeatureKind::Boolean;
        else
            kind = FeatureKind::Categorical;

        Column col;
        col.spec = {name, kind, false};
        col.missing.assign(n, 1);
        if (kind == FeatureKind::Numeric) {
            col.num.assign(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                if (!values[i]) continue;
                if (auto x = values[i]->numeric()) {
                    col.num[i] = *x;
                    col.missing[i] = 0;
                }
            }
        } else if (kind == FeatureKind::Boolean) {
            col.categories = {"false", "true"};
            col.cat.assign(n, 0);
            for (std::size_t i = 0; i < n; ++i) {
                if (!values[i] || !values[i]->is_boolean()) continue;
                col.cat[i] = values[i]->as_boolean() ? 1 : 0;
                col.missing[i] = 0;
            }
        } else {
            std::set<std::string> distinct;
            std::vector<std::optional<std::string>> strs(n);
            for (std::size_t i = 0; i < n; ++i) {
                if (!values[i]) continue;
                strs[i] = detail::advalue_as_category(*values[i]);
                distinct.insert(*strs[i]);
            }
            if (distinct.size() > options.max_categories)
                throw Error("build_dataset: column " + name + " has " +
                            std::to_string(distinct.size()) + " distinct values (max " +
                            std::to_string(options.max_categories) + ")");
            col.categories.assign(distinct.begin(), distinct.end());
            std::map<std::string, std::int32_t> id_of;
            for (std::size_t i = 0; i < col.categories.size(); ++i)
                id_of[col.categories[i]] = static_cast<std::int32_t>(i);
            col.cat.assign(n, 0);
            for (std::size_t i = 0; i < n; ++i) {
                if (!strs[i]) continue;
                col.cat[i] = id_of[*strs[i]];
                col.missing[i] = 0;
            }
        }
        // Recheck definedness after kind coercion (a spec override can turn
        // every value missing, e.g. Numeric forced onto an all-string column).
        std::size_t still_defined = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (!col.missing[i])
                ++still_defined;
        if (still_defined == 0) {
            if (report)
                report->warnings.push_back("column " + name +
                                           ": no values usable as " + to_string(kind) + ", dropped");
            continue;
        }
        ds.columns.push_back(std::move(col));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Split-frame and fold assignment.

/// Random train/valid/test assignment at exact quotas: Valid and Test get
/// floor(ratio * n) rows each, Train takes the remainder.
inline void split_frame(Dataset& ds, std::array<double, 3> ratios, std::uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (ratios[0] <= 0 || ratios[1] <= 0 || ratios[2] <= 0 || std::abs(sum - 1.0) > 1e-9)
        throw ContractError("split_frame: ratios must be positive and sum to 1");
    const std::size_t n = ds.n_rows();
    if (n < 3)
        throw Error("split_frame: need at least 3 rows to populate three partitions");

    // floor(ratio * n), nudged so 0.3 * 1000 = 299.999... still floors to 300.
    auto quota = [n](double r) {
        return static_cast<std::size_t>(r * static_cast<double>(n) + 1e-9);
    };
    const std::size_t n_valid = quota(ratios[1]);
    const std::size_t n_test = quota(ratios[2]);

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(mix_seed(seed, 0x5917));
    rng.shuffle(order);

    const std::size_t n_train = n - n_valid - n_test;
    for (std::size_t i = 0; i < n; ++i) {
        SplitPart part = i < n_train                ? SplitPart::Train
                         : i < n_train + n_valid    ? SplitPart::Valid
                                                    : SplitPart::Test;
        ds.split[order[i]] = part;
    }
}

/// Uniform fold assignment via seeded shuffle plus round-robin; fold sizes
/// differ by at most one.
inline void assign_folds(Dataset& ds, int k, std::uint64_t seed) {
    if (k < 2)
        throw ContractError("assign_folds: k must be >= 2");
    const std::size_t n = ds.n_rows();
    if (static_cast<std::size_t>(k) > n)
        throw Error("assign_folds: k exceeds row count");
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(mix_seed(seed, 0xF01D));
    rng.shuffle(order);
    for (std::size_t i = 0; i < n; ++i)
        ds.fold[order[i]] = static_cast<std::int32_t>(i % static_cast<std::size_t>(k));
}

// ---------------------------------------------------------------------------
// Dataset store: a directory holding schema.json plus data.csv. Numbers are
// written in shortest round-trip form, so load(save(ds)) == ds bit for bit,
// including missing flags (missing = unquoted empty cell).

inline constexpr int kDatasetFormatVersion = 1;

inline std::string fingerprint_hex(std::uint64_t fp) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
    return buf;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    nlohmann::json schema;
    schema["format"] = "taskseer-dataset";
    schema["version"] = kDatasetFormatVersion;
    schema["n_rows"] = ds.n_rows();
    schema["fingerprint"] = fingerprint_hex(ds.fingerprint());
    schema["label_name"] = "Outcome";
    schema["split_name"] = "Split";
    schema["fold_name"] = "Fold";
    nlohmann::json features = nlohmann::json::array();
    for (const Column& c : ds.columns) {
        nlohmann::json f;
        f["name"] = c.spec.name;
        f["kind"] = to_string(c.spec.kind);
        if (!c.is_numeric())
            f["categories"] = c.categories;
        features.push_back(std::move(f));
    }
    schema["features"] = std::move(features);
    {
        std::ofstream out(dir / "schema.json", std::ios::binary);
        if (!out) throw Error("cannot write " + (dir / "schema.json").string());
        out << schema.dump(2) << '\n';
    }

    std::ofstream out(dir / "data.csv", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "data.csv").string());
    out << csv_quote("source_node") << ',' << csv_quote("cluster_id") << ',' << csv_quote("proc_id")
        << ',' << csv_quote("label") << ',' << csv_quote("split") << ',' << csv_quote("fold");
    for (const Column& c : ds.columns)
        out << ',' << csv_quote(c.spec.name);
    out << '\n';
    for (std::size_t i = 0; i < ds.n_rows(); ++i) {
        out << csv_quote(ds.row_meta[i].source_node) << ',' << ds.row_meta[i].cluster_id << ','
            << ds.row_meta[i].proc_id << ',' << to_string(ds.labels[i]) << ','
            << to_string(ds.split[i]) << ',' << ds.fold[i];
        for (const Column& c : ds.columns) {
            out << ',';
            if (c.missing[i])
                continue;
            if (c.spec.kind == FeatureKind::Numeric)
                out << format_double(c.num[i]);
            else if (c.spec.kind == FeatureKind::Boolean)
                out << (c.cat[i] ? "true" : "false");
            else
                out << csv_quote(c.categories[static_cast<std::size_t>(c.cat[i])]);
        }
        out << '\n';
    }
    if (!out)
        throw Error("dataset store: write failure");
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream schema_in(dir / "schema.json", std::ios::binary);
    if (!schema_in)
        throw Error("cannot open " + (dir / "schema.json").string());
    nlohmann::json schema;
    try {
        schema = nlohmann::json::parse(schema_in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("schema.json: " + std::string(e.what()));
    }
    if (schema.value("format", "") != "taskseer-dataset")
        throw Error("not a taskseer dataset: " + dir.string());
    if (schema.value("version", -1) != kDatasetFormatVersion)
        throw Error("unsupported dataset version in " + dir.string());

    Dataset ds;
    for (const auto& f : schema.at("features")) {
        Column col;
        col.spec.name = f.at("name").get<std::string>();
        col.spec.kind = feature_kind_from_string(f.at("kind").get<std::string>());
        if (f.contains("categories"))
            col.categories = f.at("categories").get<std::vector<std::string>>();
        ds.columns.push_back(std::move(col));
    }

    const auto n_rows = schema.at("n_rows").get<std::size_t>();

    std::ifstream data_in(dir / "data.csv", std::ios::binary);
    if (!data_in)
        throw Error("cannot open " + (dir / "data.csv").string());
    std::ostringstream buf;
    buf << data_in.rdbuf();
    const std::string text = buf.str();

    std::vector<std::map<std::string, std::int32_t>> id_of(ds.columns.size());
    for (std::size_t c = 0; c < ds.columns.size(); ++c)
        for (std::size_t k = 0; k < ds.columns[c].categories.size(); ++k)
            id_of[c][ds.columns[c].categories[k]] = static_cast<std::int32_t>(k);

    std::size_t pos = 0;
    std::vector<CsvField> fields;
    if (!csv_read_record(text, pos, fields))
        throw ParseError("data.csv: missing header");
    const std::size_t expected = 6 + ds.columns.size();
    if (fields.size() != expected)
        throw ParseError("data.csv: header has " + std::to_string(fields.size()) +
                         " columns, schema expects " + std::to_string(expected));

    while (csv_read_record(text, pos, fields)) {
        if (fields.size() == 1 && fields[0].text.empty() && !fields[0].quoted)
            continue; // trailing blank line
        if (fields.size() != expected)
            throw ParseError("data.csv: row has " + std::to_string(fields.size()) + " fields");
        RowMeta meta;
        meta.source_node = fields[0].text;
        meta.cluster_id = parse_int(fields[1].text);
        meta.proc_id = parse_int(fields[2].text);
        ds.row_meta.push_back(std::move(meta));
        const std::string& label = fields[3].text;
        if (label == "Failed")
            ds.labels.push_back(Outcome::Failed);
        else if (label == "Succeeded")
            ds.labels.push_back(Outcome::Succeeded);
        else
            throw ParseError("data.csv: bad label '" + label + "'");
        ds.split.push_back(split_part_from_string(fields[4].text));
        ds.fold.push_back(static_cast<std::int32_t>(parse_int(fields[5].text)));

        for (std::size_t c = 0; c < ds.columns.size(); ++c) {
            Column& col = ds.columns[c];
            const CsvField& cell = fields[6 + c];
            bool missing = cell.text.empty() && !cell.quoted;
            col.missing.push_back(missing ? 1 : 0);
            if (col.spec.kind == FeatureKind::Numeric) {
                col.num.push_back(missing ? 0.0 : parse_double(cell.text));
            } else if (col.spec.kind == FeatureKind::Boolean) {
                std::int32_t v = 0;
                if (!missing) {
                    if (cell.text == "true") v = 1;
                    else if (cell.text != "false")
                        throw ParseError("data.csv: bad boolean '" + cell.text + "'");
                }
                col.cat.push_back(v);
            } else {
                std::int32_t v = 0;
                if (!missing) {
                    auto it = id_of[c].find(cell.text);
                    if (it == id_of[c].end())
                        throw ParseError("data.csv: value '" + cell.text +
                                         "' not in dictionary of column " + col.spec.name);
                    v = it->second;
                }
                col.cat.push_back(v);
            }
        }
    }
    // Booleans always carry their fixed dictionary.
    for (Column& col : ds.columns)
        if (col.spec.kind == FeatureKind::Boolean && col.categories.empty())
            col.categories = {"false", "true"};

    if (ds.n_rows() != n_rows)
        throw Error("data.csv row count " + std::to_string(ds.n_rows()) +
                    " does not match schema n_rows " + std::to_string(n_rows));
    if (fingerprint_hex(ds.fingerprint()) != schema.at("fingerprint").get<std::string>())
        throw Error("dataset fingerprint mismatch in " + dir.string());
    return ds;
}

} // namespace taskseer
