// Copyright (c) 2026 taskseer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic-trace and dataset generator. The production trace
// behind the reported numbers is private, so statistical tests run against
// generated traces whose ground truth is recorded exactly in a ledger:
// category quotas are assigned by largest remainder (not sampled), usage
// attributes are integer-valued so aggregates compare exactly, and every
// JobStatus is consistent with the ledgered label.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "taskseer/categorize.hpp"
#include "taskseer/dataset.hpp"
#include "taskseer/rng.hpp"

namespace taskseer::synth {

struct PlantedFeature {
    std::string name;
    FeatureKind kind = FeatureKind::Numeric;
    double strength = 0.5; // 0 = uninformative, 1 = fully separates the labels
};

struct SynthSpec {
    std::size_t n_submissions = 1000;
    // Category enum order: SingleSuccess, SingleFail, MultiAllSuccess,
    // MultiAllFail, MultiMixed.
    std::array<double, kCategoryCount> category_mix = {0.622, 0.248, 0.020, 0.002, 0.108};
    double tasks_per_multi_mean = 20.0;
    double failure_rate_in_mixed = 0.143;
    // FailureKind enum order.
    std::array<double, kFailureKindCount> failure_kind_mix = {0.5643, 0.3965, 0.0187,
                                                              0.0099, 0.0036, 0.0070};
    std::size_t n_nodes = 2;
    std::vector<PlantedFeature> planted;
    double noise_rate = 0.0;
    std::size_t qualifying_min_tasks = 5;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_submissions == 0)
            throw Error("synth spec: n_submissions must be positive");
        if (n_nodes == 0)
            throw Error("synth spec: n_nodes must be positive");
        auto check_mix = [](const auto& mix, const char* what) {
            double sum = 0.0;
            for (double m : mix) {
                if (m < 0.0)
                    throw Error(std::string("synth spec: negative weight in ") + what);
                sum += m;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw Error(std::string("synth spec: ") + what + " must sum to 1");
        };
        check_mix(category_mix, "category_mix");
        check_mix(failure_kind_mix, "failure_kind_mix");
        if (failure_rate_in_mixed <= 0.0 || failure_rate_in_mixed >= 1.0)
            throw Error("synth spec: failure_rate_in_mixed must be in (0, 1)");
        if (noise_rate < 0.0 || noise_rate >= 0.5)
            throw Error("synth spec: noise_rate must be in [0, 0.5)");
        bool has_multi = category_mix[2] > 0 || category_mix[3] > 0 || category_mix[4] > 0;
        if (has_multi && tasks_per_multi_mean < 2.0)
            throw Error("synth spec: multi-task submissions need tasks_per_multi_mean >= 2");
    }
};

struct Ledger {
    std::size_t n_submissions = 0;
    std::array<std::size_t, kCategoryCount> submissions_by_category{};
    std::array<std::size_t, kCategoryCount> tasks_by_category{};
    std::size_t tasks_total = 0;
    std::size_t tasks_succeeded = 0;
    std::size_t tasks_failed = 0;
    std::array<std::size_t, kFailureKindCount> failure_kinds{};
    std::size_t qualifying_min_tasks = 5;
    std::size_t qualifying_submissions = 0; // MultiMixed with >= min tasks
    std::size_t qualifying_tasks = 0;
    std::map<std::string, UsageStat> usage;
    std::map<std::string, double> planted_effects;
    // 'S'/'F' per proc, keyed by node then cluster.
    std::map<std::string, std::map<std::int64_t, std::string>> labels;
};

namespace detail {

/// Exact quota assignment: floor everywhere, leftovers to the largest
/// fractional parts (ties to the lower index).
template <std::size_t N>
inline std::array<std::size_t, N> largest_remainder(std::size_t total,
                                                    const std::array<double, N>& weights) {
    std::array<std::size_t, N> quota{};
    std::array<double, N> frac{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < N; ++i) {
        double exact = weights[i] * static_cast<double>(total);
        quota[i] = static_cast<std::size_t>(exact + 1e-9);
        frac[i] = exact - static_cast<double>(quota[i]);
        assigned += quota[i];
    }
    std::size_t remaining = total - assigned;
    std::array<std::size_t, N> order{};
    for (std::size_t i = 0; i < N; ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&frac](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; k < remaining; ++k)
        quota[order[k % N]] += 1;
    return quota;
}

/// Shifted geometric task count with floor 2 and the requested mean.
inline std::size_t draw_multi_count(Rng& rng, double mean) {
    if (mean <= 2.0)
        return 2;
    double p = 1.0 / (mean - 1.0);
    double u = rng.u01();
    double e = std::floor(std::log(1.0 - u) / std::log(1.0 - p));
    if (e < 0.0)
        e = 0.0;
    return 2 + static_cast<std::size_t>(e);
}

inline void accumulate_usage(Ledger& ledger, const std::string& attr, std::int64_t value) {
    UsageStat& s = ledger.usage[attr];
    if (s.attribute.empty())
        s.attribute = attr;
    auto x = static_cast<double>(value);
    if (s.count == 0) {
        s.min = s.max = x;
    } else {
        s.min = std::min(s.min, x);
        s.max = std::max(s.max, x);
    }
    s.cumulative += x;
    ++s.count;
}

} // namespace detail

inline nlohmann::json ledger_to_json(const Ledger& ledger) {
    nlohmann::json j;
    j["n_submissions"] = ledger.n_submissions;
    nlohmann::json cats = nlohmann::json::object();
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
        cats[to_string(static_cast<Category>(c))] = {
            {"submissions", ledger.submissions_by_category[c]},
            {"tasks", ledger.tasks_by_category[c]},
        };
    }
    j["categories"] = std::move(cats);
    j["tasks_total"] = ledger.tasks_total;
    j["tasks_succeeded"] = ledger.tasks_succeeded;
    j["tasks_failed"] = ledger.tasks_failed;
    nlohmann::json kinds = nlohmann::json::object();
    for (std::size_t k = 0; k < kFailureKindCount; ++k)
        kinds[to_string(static_cast<FailureKind>(k))] = ledger.failure_kinds[k];
    j["failure_kinds"] = std::move(kinds);
    j["qualifying_min_tasks"] = ledger.qualifying_min_tasks;
    j["qualifying_submissions"] = ledger.qualifying_submissions;
    j["qualifying_tasks"] = ledger.qualifying_tasks;
    nlohmann::json usage = nlohmann::json::object();
    for (const auto& [attr, s] : ledger.usage) {
        usage[attr] = {{"cumulative", s.cumulative}, {"average", s.average}, {"max", s.max},
                       {"min", s.min},               {"count", s.count},
                       {"undefined_excluded", s.undefined_excluded}};
    }
    j["usage"] = std::move(usage);
    j["planted_effects"] = ledger.planted_effects;
    nlohmann::json labels = nlohmann::json::object();
    for (const auto& [node, clusters] : ledger.labels) {
        nlohmann::json per_node = nlohmann::json::object();
        for (const auto& [cluster, s] : clusters)
            per_node[std::to_string(cluster)] = s;
        labels[node] = std::move(per_node);
    }
    j["labels"] = std::move(labels);
    return j;
}

inline Ledger ledger_from_json(const nlohmann::json& j) {
    Ledger ledger;
    ledger.n_submissions = j.at("n_submissions").get<std::size_t>();
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
        const auto& e = j.at("categories").at(to_string(static_cast<Category>(c)));
        ledger.submissions_by_category[c] = e.at("submissions").get<std::size_t>();
        ledger.tasks_by_category[c] = e.at("tasks").get<std::size_t>();
    }
    ledger.tasks_total = j.at("tasks_total").get<std::size_t>();
    ledger.tasks_succeeded = j.at("tasks_succeeded").get<std::size_t>();
    ledger.tasks_failed = j.at("tasks_failed").get<std::size_t>();
    for (std::size_t k = 0; k < kFailureKindCount; ++k)
        ledger.failure_kinds[k] =
            j.at("failure_kinds").at(to_string(static_cast<FailureKind>(k))).get<std::size_t>();
    ledger.qualifying_min_tasks = j.at("qualifying_min_tasks").get<std::size_t>();
    ledger.qualifying_submissions = j.at("qualifying_submissions").get<std::size_t>();
    ledger.qualifying_tasks = j.at("qualifying_tasks").get<std::size_t>();
    for (const auto& [attr, e] : j.at("usage").items()) {
        UsageStat s;
        s.attribute = attr;
        s.cumulative = e.at("cumulative").get<double>();
        s.average = e.at("average").get<double>();
        s.max = e.at("max").get<double>();
        s.min = e.at("min").get<double>();
        s.count = e.at("count").get<std::size_t>();
        s.undefined_excluded = e.at("undefined_excluded").get<std::size_t>();
        ledger.usage[attr] = std::move(s);
    }
    for (const auto& [name, v] : j.at("planted_effects").items())
        ledger.planted_effects[name] = v.get<double>();
    for (const auto& [node, clusters] : j.at("labels").items())
        for (const auto& [cluster, s] : clusters.items())
            ledger.labels[node][parse_int(cluster)] = s.get<std::string>();
    return ledger;
}

inline Ledger load_ledger(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open ledger " + path.string());
    try {
        return ledger_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("ledger: " + std::string(e.what()));
    }
}

// ---------------------------------------------------------------------------
// Trace generation.

namespace detail {

struct PlannedTask {
    Outcome label = Outcome::Succeeded;
    FailureKind kind = FailureKind::Other; // failed tasks only
};

struct PlannedSubmission {
    Category category = Category::SingleSuccess;
    std::size_t node = 0;
    std::int64_t cluster_id = 0;
    std::vector<PlannedTask> tasks;
};

inline void plant_feature(nlohmann::json& ad, const PlantedFeature& f, Outcome label,
                          double noise_rate, Rng& rng) {
    bool failed = label == Outcome::Failed;
    if (noise_rate > 0.0 && rng.u01() < noise_rate)
        failed = !failed;
    double s = f.strength;
    switch (f.kind) {
    case FeatureKind::Numeric: {
        double u = rng.u01();
        ad[f.name] = failed ? s + (1.0 - s) * u : (1.0 - s) * u;
        break;
    }
    case FeatureKind::Categorical: {
        bool aligned = rng.u01() < (1.0 + s) / 2.0;
        bool risky = failed == aligned;
        ad[f.name] = risky ? "risky" : "safe";
        break;
    }
    case FeatureKind::Boolean: {
        bool aligned = rng.u01() < (1.0 + s) / 2.0;
        ad[f.name] = failed == aligned;
        break;
    }
    }
}

} // namespace detail

/// Generate history_<node>.json files consumable by the ingest pipeline plus
/// ledger.json, and return the ledger. Byte-identical for a fixed spec.
inline Ledger synth_trace(const SynthSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    std::filesystem::create_directories(out_dir);
    Rng rng(spec.seed);

    // Plan the structure: quotas, sizes, labels.
    std::array<std::size_t, kCategoryCount> quotas =
        detail::largest_remainder(spec.n_submissions, spec.category_mix);
    std::vector<Category> order;
    order.reserve(spec.n_submissions);
    for (std::size_t c = 0; c < kCategoryCount; ++c)
        order.insert(order.end(), quotas[c], static_cast<Category>(c));
    rng.shuffle(order);

    Ledger ledger;
    ledger.n_submissions = spec.n_submissions;
    ledger.qualifying_min_tasks = spec.qualifying_min_tasks;
    for (const PlantedFeature& f : spec.planted)
        ledger.planted_effects[f.name] = f.strength;

    std::vector<detail::PlannedSubmission> plan;
    plan.reserve(spec.n_submissions);
    std::size_t total_failed = 0;
    for (std::size_t i = 0; i < spec.n_submissions; ++i) {
        detail::PlannedSubmission sub;
        sub.category = order[i];
        sub.node = i % spec.n_nodes;
        sub.cluster_id = static_cast<std::int64_t>(1000 + i);
        std::size_t m = 1;
        if (sub.category == Category::MultiAllSuccess || sub.category == Category::MultiAllFail ||
            sub.category == Category::MultiMixed)
            m = detail::draw_multi_count(rng, spec.tasks_per_multi_mean);
        sub.tasks.resize(m);
        switch (sub.category) {
        case Category::SingleSuccess:
        case Category::MultiAllSuccess:
            for (auto& t : sub.tasks)
                t.label = Outcome::Succeeded;
            break;
        case Category::SingleFail:
        case Category::MultiAllFail:
            for (auto& t : sub.tasks)
                t.label = Outcome::Failed;
            break;
        case Category::MultiMixed: {
            auto fail_count = static_cast<std::size_t>(
                std::llround(spec.failure_rate_in_mixed * static_cast<double>(m)));
            fail_count = std::max<std::size_t>(1, std::min(fail_count, m - 1));
            std::vector<std::size_t> positions(m);
            std::iota(positions.begin(), positions.end(), std::size_t{0});
            rng.shuffle(positions);
            for (std::size_t k = 0; k < fail_count; ++k)
                sub.tasks[positions[k]].label = Outcome::Failed;
            break;
        }
        }
        for (const auto& t : sub.tasks)
            if (t.label == Outcome::Failed)
                ++total_failed;
        plan.push_back(std::move(sub));
    }

    // Failure kinds at exact quotas over all failed tasks.
    std::array<std::size_t, kFailureKindCount> kind_quotas =
        detail::largest_remainder(total_failed, spec.failure_kind_mix);
    std::vector<FailureKind> kind_sequence;
    kind_sequence.reserve(total_failed);
    for (std::size_t k = 0; k < kFailureKindCount; ++k)
        kind_sequence.insert(kind_sequence.end(), kind_quotas[k], static_cast<FailureKind>(k));
    rng.shuffle(kind_sequence);
    std::size_t kind_cursor = 0;
    for (auto& sub : plan)
        for (auto& t : sub.tasks)
            if (t.label == Outcome::Failed)
                t.kind = kind_sequence[kind_cursor++];

    // Emit the ads and fill the ledger.
    std::vector<nlohmann::json> per_node(spec.n_nodes, nlohmann::json::array());
    const std::int64_t base_time = 1500000000;
    std::size_t task_counter = 0;
    for (const auto& sub : plan) {
        auto c = static_cast<std::size_t>(sub.category);
        ledger.submissions_by_category[c] += 1;
        ledger.tasks_by_category[c] += sub.tasks.size();
        std::string node_name = "submit" + std::string(sub.node + 1 < 10 ? "0" : "") +
                                std::to_string(sub.node + 1);
        bool qualifies = sub.category == Category::MultiMixed &&
                         sub.tasks.size() >= spec.qualifying_min_tasks;
        if (qualifies) {
            ledger.qualifying_submissions += 1;
            ledger.qualifying_tasks += sub.tasks.size();
        }
        std::string& label_string = ledger.labels[node_name][sub.cluster_id];

        for (std::size_t p = 0; p < sub.tasks.size(); ++p) {
            const detail::PlannedTask& task = sub.tasks[p];
            bool failed = task.label == Outcome::Failed;
            ++ledger.tasks_total;
            (failed ? ledger.tasks_failed : ledger.tasks_succeeded) += 1;
            label_string += failed ? 'F' : 'S';
            if (failed)
                ledger.failure_kinds[static_cast<std::size_t>(task.kind)] += 1;

            ++task_counter;
            nlohmann::json ad;
            ad["ClusterId"] = sub.cluster_id;
            ad["ProcId"] = static_cast<std::int64_t>(p);
            ad["JobStatus"] = failed ? 3 : 4;
            ad["Owner"] = "user" + std::to_string(sub.cluster_id % 17);
            ad["Cmd"] = "/opt/jobs/batch_" + std::to_string(sub.cluster_id % 7) + ".sh";
            std::int64_t qdate = base_time + static_cast<std::int64_t>(task_counter) * 60;
            ad["QDate"] = qdate;
            ad["RequestMemory"] = static_cast<std::int64_t>(1024 << rng.bounded(3));
            ad["RequestCpus"] = static_cast<std::int64_t>(1 + rng.bounded(4));
            ad["AutoClusterId"] = static_cast<std::int64_t>(rng.bounded(500));
            ad["StartdPrincipal"] =
                "execute-side@matchsession/10.0.0." + std::to_string(rng.bounded(4));
            ad["RemoteHost"] = "slot1@n" + std::to_string(rng.bounded(40)) + ".cluster.local";
            ad["WantCheckpoint"] = rng.bounded(2) == 1;

            bool never_started = failed && (task.kind == FailureKind::RemovedBeforeScheduled ||
                                            task.kind == FailureKind::AttributeExpressionError);
            std::int64_t user_cpu = 0, sys_cpu = 0, suspension = 0, bytes_sent = 0;
            if (!never_started) {
                user_cpu = static_cast<std::int64_t>(rng.bounded(100000));
                sys_cpu = static_cast<std::int64_t>(rng.bounded(10000));
                suspension = static_cast<std::int64_t>(rng.bounded(50));
                bytes_sent = static_cast<std::int64_t>(rng.bounded(1000000000));
            }
            ad["RemoteUserCpu"] = user_cpu;
            ad["RemoteSysCpu"] = sys_cpu;
            ad["CumulativeSuspensionTime"] = suspension;
            ad["BytesSent"] = bytes_sent;
            ad["CumulativeRemoteUserCPU"] = user_cpu;
            ad["CommittedSlotTime"] = never_started ? 0 : sys_cpu + user_cpu;
            ad["CommittedTime"] = never_started ? 0 : user_cpu;
            ad["NumJobCompletions"] = failed ? 0 : 1;
            ad["NumShadowStarts"] = never_started ? 0 : static_cast<std::int64_t>(1 + rng.bounded(3));
            ad["JobRunCount"] = never_started ? 0 : static_cast<std::int64_t>(1 + rng.bounded(2));
            ad["BlockReads"] = never_started ? 0 : static_cast<std::int64_t>(rng.bounded(10000));
            ad["RecentBlockReadKbytes"] =
                never_started ? 0 : static_cast<std::int64_t>(rng.bounded(4096));
            ad["LastVacateTime"] = never_started ? 0 : qdate + 30;
            if (!never_started)
                ad["JobLastStartDate"] = qdate + 5;
            std::int64_t runtime = user_cpu / 10 + 60;
            ad["CompletionDate"] = qdate + runtime;

            detail::accumulate_usage(ledger, "RemoteUserCpu", user_cpu);
            detail::accumulate_usage(ledger, "RemoteSysCpu", sys_cpu);
            detail::accumulate_usage(ledger, "CumulativeSuspensionTime", suspension);
            detail::accumulate_usage(ledger, "BytesSent", bytes_sent);

            if (!failed) {
                ad["ExitCode"] = 0;
                ad["NumJobStarts"] = static_cast<std::int64_t>(1 + rng.bounded(2));
                ad["LastJobStatus"] = 2;
            } else {
                switch (task.kind) {
                case FailureKind::RemovedBeforeScheduled:
                    ad["RemoveReason"] = "Removed by user via condor_rm (by user " +
                                         std::string("user") +
                                         std::to_string(sub.cluster_id % 17) + ")";
                    // Alternate absent / 0 for coverage of both never-started shapes.
                    if (p % 2 == 0)
                        ad["NumJobStarts"] = 0;
                    ad["LastJobStatus"] = 1;
                    break;
                case FailureKind::AttributeExpressionError:
                    ad["RemoveReason"] = "User defined attribute expression error in submit description";
                    ad["NumJobStarts"] = 1;
                    ad["LastJobStatus"] = 1;
                    break;
                case FailureKind::UserLogInitFailure:
                    ad["LastHoldReason"] = "Failed to initialize user log to /home/user" +
                                           std::to_string(sub.cluster_id % 17) + "/job.log";
                    ad["NumJobStarts"] = 1;
                    ad["LastJobStatus"] = 5;
                    break;
                case FailureKind::OutOfMemory:
                    ad["LastHoldReason"] =
                        "Job was held: memory usage exceeded request_memory (2048 MB)";
                    ad["NumJobStarts"] = static_cast<std::int64_t>(1 + rng.bounded(2));
                    ad["LastJobStatus"] = 5;
                    break;
                case FailureKind::NoSuchFileOrDirectory:
                    ad["LastHoldReason"] =
                        "Error from starter: cannot start job: No such file or directory";
                    ad["NumJobStarts"] = 1;
                    ad["LastJobStatus"] = 5;
                    break;
                case FailureKind::Other:
                    if (p % 2 == 0)
                        ad["LastHoldReason"] = "Unspecified starter exception";
                    ad["NumJobStarts"] = static_cast<std::int64_t>(1 + rng.bounded(3));
                    ad["LastJobStatus"] = 5;
                    break;
                }
                if (!never_started)
                    ad["ExitCode"] = static_cast<std::int64_t>(1 + rng.bounded(100));
            }

            for (const PlantedFeature& f : spec.planted)
                detail::plant_feature(ad, f, task.label, spec.noise_rate, rng);

            per_node[sub.node].push_back(std::move(ad));
        }
    }

    for (auto& [attr, s] : ledger.usage)
        s.average = s.count ? s.cumulative / static_cast<double>(s.count) : 0.0;

    for (std::size_t k = 0; k < spec.n_nodes; ++k) {
        std::string node_name =
            "submit" + std::string(k + 1 < 10 ? "0" : "") + std::to_string(k + 1);
        std::filesystem::path path = out_dir / ("history_" + node_name + ".json");
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw Error("cannot write " + path.string());
        out << per_node[k].dump(2) << '\n';
        if (!out)
            throw Error("synth trace: write failure on " + path.string());
    }
    {
        std::ofstream out(out_dir / "ledger.json", std::ios::binary);
        if (!out)
            throw Error("cannot write " + (out_dir / "ledger.json").string());
        out << ledger_to_json(ledger).dump(2) << '\n';
    }
    return ledger;
}

// ---------------------------------------------------------------------------
// Planted-signal dataset: the oracle for the learning claims.

struct PlantedDataset {
    Dataset dataset;             // labels after noise flips
    std::vector<Outcome> truth;  // labels before noise flips
    std::string signal_name;
};

/// Labels are a threshold function of the signal feature, then flipped with
/// probability noise_rate; the noise features are independent of the labels,
/// making the Bayes error exactly noise_rate. Noise feature kinds cycle
/// Numeric, Categorical (8 levels), Boolean.
inline PlantedDataset planted_signal_dataset(std::size_t n_rows, std::size_t n_noise_features,
                                             const std::string& signal_name, double separation,
                                             double noise_rate, std::uint64_t seed) {
    if (n_rows == 0)
        throw ContractError("planted_signal_dataset: n_rows must be positive");
    if (noise_rate < 0.0 || noise_rate >= 0.5)
        throw ContractError("planted_signal_dataset: noise_rate must be in [0, 0.5)");
    if (separation <= 0.0 || separation > 1.0)
        throw ContractError("planted_signal_dataset: separation must be in (0, 1]");

    PlantedDataset out;
    out.signal_name = signal_name;
    Dataset& ds = out.dataset;

    Column signal;
    signal.spec = {signal_name, FeatureKind::Numeric, false};
    signal.num.reserve(n_rows);
    signal.missing.assign(n_rows, 0);

    std::vector<Column> noise(n_noise_features);
    for (std::size_t j = 0; j < n_noise_features; ++j) {
        Column& col = noise[j];
        std::string name = "noise_" + std::to_string(j);
        switch (j % 3) {
        case 0:
            col.spec = {name, FeatureKind::Numeric, false};
            col.num.reserve(n_rows);
            break;
        case 1:
            col.spec = {name, FeatureKind::Categorical, false};
            for (int c = 0; c < 8; ++c)
                col.categories.push_back("c" + std::to_string(c));
            col.cat.reserve(n_rows);
            break;
        default:
            col.spec = {name, FeatureKind::Boolean, false};
            col.categories = {"false", "true"};
            col.cat.reserve(n_rows);
            break;
        }
        col.missing.assign(n_rows, 0);
    }

    Rng rng(seed);
    for (std::size_t i = 0; i < n_rows; ++i) {
        double u = rng.u01();
        bool truly_failed = u >= 0.5;
        signal.num.push_back(u + (truly_failed ? separation / 2.0 : -separation / 2.0));
        Outcome truth = truly_failed ? Outcome::Failed : Outcome::Succeeded;
        Outcome observed = truth;
        if (noise_rate > 0.0 && rng.u01() < noise_rate)
            observed = truly_failed ? Outcome::Succeeded : Outcome::Failed;
        out.truth.push_back(truth);
        ds.labels.push_back(observed);
        ds.row_meta.push_back({"synth", 1, static_cast<std::int64_t>(i)});
        for (std::size_t j = 0; j < n_noise_features; ++j) {
            Column& col = noise[j];
            switch (j % 3) {
            case 0: col.num.push_back(rng.u01()); break;
            case 1: col.cat.push_back(static_cast<std::int32_t>(rng.bounded(8))); break;
            default: col.cat.push_back(static_cast<std::int32_t>(rng.bounded(2))); break;
            }
        }
    }
    ds.split.assign(n_rows, SplitPart::Train);
    ds.fold.assign(n_rows, 0);

    ds.columns = std::move(noise);
    ds.columns.push_back(std::move(signal));
    std::sort(ds.columns.begin(), ds.columns.end(),
              [](const Column& a, const Column& b) { return a.spec.name < b.spec.name; });
    return out;
}

// ---------------------------------------------------------------------------
// Spec file: plain key = value lines, '#' comments.

inline SynthSpec parse_synth_spec_text(const std::string& text) {
    SynthSpec spec;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    auto trim = [](std::string s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        return s.substr(b, e - b + 1);
    };
    auto split_list = [&trim](const std::string& v) {
        std::vector<std::string> parts;
        std::istringstream ls(v);
        std::string item;
        while (std::getline(ls, item, ','))
            parts.push_back(trim(item));
        return parts;
    };
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("synth spec line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "n_submissions") {
                spec.n_submissions = static_cast<std::size_t>(parse_int(value));
            } else if (key == "category_mix") {
                auto parts = split_list(value);
                if (parts.size() != kCategoryCount)
                    throw ParseError("category_mix needs 5 weights");
                for (std::size_t i = 0; i < kCategoryCount; ++i)
                    spec.category_mix[i] = parse_double(parts[i]);
            } else if (key == "failure_kind_mix") {
                auto parts = split_list(value);
                if (parts.size() != kFailureKindCount)
                    throw ParseError("failure_kind_mix needs 6 weights");
                for (std::size_t i = 0; i < kFailureKindCount; ++i)
                    spec.failure_kind_mix[i] = parse_double(parts[i]);
            } else if (key == "tasks_per_multi_mean") {
                spec.tasks_per_multi_mean = parse_double(value);
            } else if (key == "failure_rate_in_mixed") {
                spec.failure_rate_in_mixed = parse_double(value);
            } else if (key == "n_nodes") {
                spec.n_nodes = static_cast<std::size_t>(parse_int(value));
            } else if (key == "noise_rate") {
                spec.noise_rate = parse_double(value);
            } else if (key == "qualifying_min_tasks") {
                spec.qualifying_min_tasks = static_cast<std::size_t>(parse_int(value));
            } else if (key == "seed") {
                spec.seed = static_cast<std::uint64_t>(parse_int(value));
            } else if (key == "planted") {
                // name:kind:strength entries, ';' separated
                std::istringstream ps(value);
                std::string entry;
                while (std::getline(ps, entry, ';')) {
                    entry = trim(entry);
                    if (entry.empty())
                        continue;
                    auto c1 = entry.find(':');
                    auto c2 = entry.rfind(':');
                    if (c1 == std::string::npos || c2 == c1)
                        throw ParseError("planted entry needs name:kind:strength");
                    PlantedFeature f;
                    f.name = trim(entry.substr(0, c1));
                    std::string kind = trim(entry.substr(c1 + 1, c2 - c1 - 1));
                    if (kind == "numeric") f.kind = FeatureKind::Numeric;
                    else if (kind == "categorical") f.kind = FeatureKind::Categorical;
                    else if (kind == "boolean") f.kind = FeatureKind::Boolean;
                    else throw ParseError("planted kind must be numeric|categorical|boolean");
                    f.strength = parse_double(trim(entry.substr(c2 + 1)));
                    spec.planted.push_back(std::move(f));
                }
            } else {
                throw ParseError("unknown key '" + key + "'");
            }
        } catch (const ParseError& e) {
            throw ParseError("synth spec line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return spec;
}

inline SynthSpec parse_synth_spec_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open synth spec " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_synth_spec_text(buf.str());
}

} // namespace taskseer::synth
