// Copyright (c) 2026 taskseer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// fails. Statistical criteria run against the synthetic generator's ledger
// (the production trace is private); search and arithmetic criteria run
// against exhaustive or closed-form oracles.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "taskseer/categorize.hpp"
#include "taskseer/dataset.hpp"
#include "taskseer/evaluate.hpp"
#include "taskseer/forest.hpp"
#include "taskseer/procfs.hpp"
#include "taskseer/synth.hpp"

#include "split_oracle.hpp"
#include "test_util.hpp"

using namespace taskseer;

namespace {

int failures = 0;
int checks = 0;

void report(const std::string& name, bool ok, const std::string& detail = "") {
    ++checks;
    if (!ok)
        ++failures;
    std::printf("%s: %s%s%s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.empty() ? "" : " — ",
                detail.c_str());
    std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ForestConfig default_config(std::uint64_t seed) {
    ForestConfig cfg;
    cfg.n_trees = 50;
    cfg.max_depth = 50;
    cfg.mtries = 5;
    cfg.nbins_numeric = 1000;
    cfg.nbins_categorical = 1024;
    cfg.min_rows_per_leaf = 1;
    cfg.folds = 5;
    cfg.seed = seed;
    return cfg;
}

std::vector<TaskRecord> ingest_dir(const std::filesystem::path& dir) {
    std::vector<NodeTasks> per_node;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("history_", 0) != 0)
            continue;
        NodeTasks bucket{entry.path().stem().string().substr(8), {}};
        HistoryParse parsed = parse_history_file(entry.path().string());
        for (const ClassAd& ad : parsed.ads)
            bucket.tasks.push_back(normalize_task(ad, bucket.source_node));
        per_node.push_back(std::move(bucket));
    }
    return merge_sources(per_node).tasks;
}

// ---------------------------------------------------------------------------

synth::Ledger table_trace(const std::filesystem::path& dir) {
    synth::SynthSpec spec;
    spec.n_submissions = 1000;
    spec.category_mix = {0.622, 0.248, 0.020, 0.002, 0.108};
    spec.tasks_per_multi_mean = 20;
    spec.failure_rate_in_mixed = 0.143;
    spec.n_nodes = 2;
    spec.seed = 20260808;
    return synth::synth_trace(spec, dir);
}

void criterion_table_reproduction(const std::vector<TaskRecord>& tasks,
                                  const synth::Ledger& ledger,
                                  std::chrono::steady_clock::time_point start) {
    BreakdownTables b = breakdown_report(group_by_submission(tasks));
    double elapsed = seconds_since(start); // synth + ingest + categorize
    bool ok = b.submissions_total == ledger.n_submissions && b.tasks_total == ledger.tasks_total &&
              b.tasks_succeeded == ledger.tasks_succeeded &&
              b.tasks_failed == ledger.tasks_failed;
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
        ok = ok && b.submissions_by_category[c] == ledger.submissions_by_category[c];
        ok = ok && b.tasks_by_category[c] == ledger.tasks_by_category[c];
    }
    for (std::size_t k = 0; k < kFailureKindCount; ++k)
        ok = ok && b.failure_kinds[k] == ledger.failure_kinds[k];
    ok = ok && ledger.submissions_by_category[static_cast<std::size_t>(Category::SingleSuccess)] ==
                   622 &&
         ledger.submissions_by_category[static_cast<std::size_t>(Category::SingleFail)] == 248 &&
         ledger.submissions_by_category[static_cast<std::size_t>(Category::MultiMixed)] == 108 &&
         ledger.submissions_by_category[static_cast<std::size_t>(Category::MultiAllSuccess)] ==
             20 &&
         ledger.submissions_by_category[static_cast<std::size_t>(Category::MultiAllFail)] == 2;
    bool timed = elapsed < 10.0;
    char detail[128];
    std::snprintf(detail, sizeof detail, "%zu submissions, %zu tasks, %.2fs",
                  b.submissions_total, b.tasks_total, elapsed);
    report("table-structure reproduction (ledger-exact, < 10 s)", ok && timed, detail);
}

void criterion_population_filter(const std::vector<TaskRecord>& tasks,
                                 const synth::Ledger& ledger) {
    SelectionResult sel =
        select_training_population(group_by_submission(tasks), ledger.qualifying_min_tasks);
    bool ok = sel.qualifying_groups == ledger.qualifying_submissions &&
              sel.tasks.size() == ledger.qualifying_tasks;
    char detail[128];
    std::snprintf(detail, sizeof detail, "%zu groups / %zu tasks vs ledger %zu / %zu",
                  sel.qualifying_groups, sel.tasks.size(), ledger.qualifying_submissions,
                  ledger.qualifying_tasks);
    report("population filter (ledger-exact)", ok, detail);
}

void criterion_split_fold_contracts() {
    bool ok = true;
    std::string detail;
    for (std::size_t n : {std::size_t{10}, std::size_t{1000}, std::size_t{9006}}) {
        Dataset ds;
        Column col;
        col.spec = {"x", FeatureKind::Numeric, false};
        for (std::size_t i = 0; i < n; ++i) {
            col.num.push_back(static_cast<double>(i));
            col.missing.push_back(0);
            ds.labels.push_back(i % 2 ? Outcome::Failed : Outcome::Succeeded);
            ds.row_meta.push_back({"n", 1, static_cast<std::int64_t>(i)});
        }
        ds.columns.push_back(std::move(col));
        ds.split.assign(n, SplitPart::Train);
        ds.fold.assign(n, 0);
        split_frame(ds, {0.6, 0.3, 0.1}, 17);
        std::size_t sizes[3] = {0, 0, 0};
        for (SplitPart p : ds.split)
            sizes[static_cast<std::size_t>(p)] += 1;
        std::size_t want_valid = static_cast<std::size_t>(0.3 * static_cast<double>(n) + 1e-9);
        std::size_t want_test = static_cast<std::size_t>(0.1 * static_cast<double>(n) + 1e-9);
        std::size_t want_train = n - want_valid - want_test;
        if (sizes[0] != want_train || sizes[1] != want_valid || sizes[2] != want_test) {
            ok = false;
            detail += "split quotas wrong at n=" + std::to_string(n) + "; ";
        }
        assign_folds(ds, 5, 17);
        std::size_t fold_sizes[5] = {0, 0, 0, 0, 0};
        for (auto f : ds.fold) {
            if (f < 0 || f >= 5) {
                ok = false;
                break;
            }
            fold_sizes[static_cast<std::size_t>(f)] += 1;
        }
        std::size_t total = 0, mn = n, mx = 0;
        for (std::size_t s : fold_sizes) {
            total += s;
            mn = std::min(mn, s);
            mx = std::max(mx, s);
        }
        if (total != n || mx - mn > 1) {
            ok = false;
            detail += "fold cover/spread wrong at n=" + std::to_string(n) + "; ";
        }
    }
    report("split/fold contracts (n = 10, 1000, 9006)", ok, detail);
}

void criterion_split_search_oracle() {
    auto start = std::chrono::steady_clock::now();
    Rng rng(424242);
    ForestConfig cfg;
    cfg.nbins_numeric = 1000;
    cfg.nbins_categorical = 1024;
    cfg.min_rows_per_leaf = 1;
    int agreements = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        Dataset ds = test_util::random_micro_dataset(rng);
        std::vector<std::int32_t> features(ds.columns.size());
        std::iota(features.begin(), features.end(), 0);
        auto mine = best_split(ds, ds.all_rows(), features, cfg);
        auto oracle = test_util::exhaustive_best_split(ds, ds.all_rows());
        if (mine.has_value() != oracle.has_value())
            continue;
        if (!mine || std::abs(mine->gain - oracle->gain) <= 1e-12)
            ++agreements;
    }
    double elapsed = seconds_since(start);
    char detail[96];
    std::snprintf(detail, sizeof detail, "%d/%d optimal, %.2fs", agreements, trials, elapsed);
    report("split-search oracle (200/200, < 5 s)", agreements == trials && elapsed < 5.0, detail);
}

void criterion_planted_signal() {
    auto start = std::chrono::steady_clock::now();

    // Pooled 5-fold CV at the published configuration.
    auto planted = synth::planted_signal_dataset(10000, 9, "signal", 0.2, 0.05, 1);
    assign_folds(planted.dataset, 5, 1);
    CVReport cv = cross_validate(planted.dataset, default_config(1), 1);
    double cv_error = cv.metrics.total_error.value_or(1.0);

    // Importance rank of the signal across 20 generator/training seeds; the
    // signal should also dominate the importance mass.
    int rank_one = 0;
    double min_pct = 1.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto data = synth::planted_signal_dataset(10000, 9, "signal", 0.2, 0.05, seed);
        Forest forest = train(data.dataset, default_config(seed), 1);
        auto importance = variable_importance(forest);
        if (!importance.empty() && importance.front().feature == "signal") {
            ++rank_one;
            min_pct = std::min(min_pct, importance.front().percentage);
        } else {
            min_pct = 0.0;
        }
    }
    double elapsed = seconds_since(start);
    bool ok = cv_error <= 0.08 && rank_one >= 19 && min_pct > 0.5 && elapsed < 60.0;
    char detail[160];
    std::snprintf(detail, sizeof detail,
                  "cv error %.4f, signal rank 1 in %d/20 seeds (min share %.2f), %.1fs", cv_error,
                  rank_one, min_pct, elapsed);
    report("planted-signal learning (error <= 0.08, rank 1 in >= 19/20, < 60 s)", ok, detail);
}

void criterion_determinism() {
    auto planted = synth::planted_signal_dataset(2000, 9, "signal", 0.2, 0.05, 33);
    assign_folds(planted.dataset, 5, 33);
    const Dataset& ds = planted.dataset;
    test_util::TempDir dir;

    ForestConfig cfg = default_config(33);
    bool ok = true;
    std::string detail;
    std::filesystem::path m1 = dir.path / "model_t1.txt";
    std::filesystem::path m8 = dir.path / "model_t8.txt";
    save_model(train(ds, cfg, ds.all_rows(), 1), m1);
    save_model(train(ds, cfg, ds.all_rows(), 8), m8);
    if (test_util::read_file(m1) != test_util::read_file(m8)) {
        ok = false;
        detail += "model bytes differ; ";
    }

    for (int threads : {1, 8}) {
        Forest forest = load_model(m1);
        std::vector<ScoredLabel> scores;
        for (std::uint32_t r = 0; r < ds.n_rows(); ++r)
            scores.push_back({predict(forest, ds, r).p_failed, ds.labels[r]});
        ConfusionMatrix cm = confusion_matrix(scores);
        RocCurve roc = roc_curve(scores);
        std::string suffix = "_t" + std::to_string(threads);
        write_metrics_json(metrics_to_json(cm, class_metrics(cm), 0.5, roc.auc),
                           dir.path / ("metrics" + suffix + ".json"));
        write_roc_csv(roc, dir.path / ("roc" + suffix + ".csv"));
        // CV artifacts are the thread-sensitive path: recompute with each count.
        CVReport cv = cross_validate(ds, cfg, threads);
        RocCurve cv_roc = roc_curve(cv.pooled);
        write_roc_csv(cv_roc, dir.path / ("cv_roc" + suffix + ".csv"));
        write_metrics_json(metrics_to_json(cv.cm, cv.metrics, 0.5, cv_roc.auc),
                           dir.path / ("cv_metrics" + suffix + ".json"));
    }
    if (test_util::read_file(dir.path / "metrics_t1.json") !=
        test_util::read_file(dir.path / "metrics_t8.json")) {
        ok = false;
        detail += "metrics.json differs; ";
    }
    if (test_util::read_file(dir.path / "roc_t1.csv") !=
        test_util::read_file(dir.path / "roc_t8.csv")) {
        ok = false;
        detail += "roc.csv differs; ";
    }
    if (test_util::read_file(dir.path / "cv_metrics_t1.json") !=
            test_util::read_file(dir.path / "cv_metrics_t8.json") ||
        test_util::read_file(dir.path / "cv_roc_t1.csv") !=
            test_util::read_file(dir.path / "cv_roc_t8.csv")) {
        ok = false;
        detail += "cv artifacts differ; ";
    }
    report("determinism across thread counts (byte-identical artifacts)", ok, detail);
}

void criterion_metrics_arithmetic() {
    ConfusionMatrix cm;
    cm.tp = 88;
    cm.fn = 12;
    cm.fp = 1;
    cm.tn = 99;
    ClassMetrics m = class_metrics(cm);
    bool ok = m.precision_failed && std::abs(*m.precision_failed - 88.0 / 89.0) <= 1e-12 &&
              m.recall_failed && std::abs(*m.recall_failed - 0.88) <= 1e-12 && m.error_failed &&
              std::abs(*m.error_failed - 0.12) <= 1e-12 && m.total_error &&
              std::abs(*m.total_error - 13.0 / 200.0) <= 1e-12;
    report("metrics arithmetic (tp=88 fn=12 fp=1 tn=99, exact to 1e-12)", ok);
}

void criterion_roc_properties() {
    bool ok = true;
    std::string detail;

    std::vector<ScoredLabel> perfect;
    for (int i = 0; i < 40; ++i)
        perfect.push_back({i < 15 ? 1.0 : 0.0, i < 15 ? Outcome::Failed : Outcome::Succeeded});
    if (roc_curve(perfect).auc != 1.0) {
        ok = false;
        detail += "perfect ranking auc != 1; ";
    }

    std::vector<ScoredLabel> constant;
    for (int i = 0; i < 40; ++i)
        constant.push_back({0.7, i % 3 == 0 ? Outcome::Failed : Outcome::Succeeded});
    if (roc_curve(constant).auc != 0.5) {
        ok = false;
        detail += "constant scores auc != 0.5; ";
    }

    Rng rng(606);
    std::vector<ScoredLabel> random;
    for (int i = 0; i < 10000; ++i)
        random.push_back({rng.u01(), rng.bounded(2) ? Outcome::Failed : Outcome::Succeeded});
    double auc = roc_curve(random).auc;
    if (auc < 0.48 || auc > 0.52) {
        ok = false;
        detail += "random auc " + std::to_string(auc) + " outside [0.48, 0.52]; ";
    }
    report("roc properties (perfect = 1.0, constant = 0.5, random in [0.48, 0.52])", ok, detail);
}

void criterion_procfs_fixtures() {
    namespace pfs = taskseer::procfs;
    const std::filesystem::path fixtures = std::filesystem::path(TASKSEER_FIXTURES) / "procfs";
    bool ok = true;
    std::string detail;

    // Every well-formed tree parses; serialize-reparse is bit-exact.
    std::size_t trees = 0;
    for (const auto& entry : std::filesystem::directory_iterator(fixtures)) {
        std::string name = entry.path().filename().string();
        if (name == "tree11_badio" || name == "tree12_badstat") {
            ++trees;
            continue;
        }
        ++trees;
        for (const auto& pid_dir : std::filesystem::directory_iterator(entry.path())) {
            std::int64_t pid = parse_int(pid_dir.path().filename().string());
            auto io = pfs::read_io(entry.path(), pid);
            auto stat = pfs::read_stat(entry.path(), pid);
            auto statm = pfs::read_statm(entry.path(), pid);
            auto oom = pfs::read_oom_score(entry.path(), pid);
            if (!io || !stat || !statm || !oom) {
                ok = false;
                detail += name + "/" + std::to_string(pid) + " unreadable; ";
                continue;
            }
            test_util::TempDir tmp;
            std::filesystem::create_directories(tmp.path / "1");
            std::ostringstream io_text;
            io_text << "rchar: " << io->rchar << "\nwchar: " << io->wchar
                    << "\nsyscr: " << io->syscr << "\nsyscw: " << io->syscw
                    << "\nread_bytes: " << io->read_bytes << "\nwrite_bytes: " << io->write_bytes
                    << "\ncancelled_write_bytes: " << io->cancelled_write_bytes << '\n';
            std::ostringstream stat_text;
            stat_text << stat->pid << " (" << stat->comm << ") " << stat->state << ' '
                      << stat->ppid << " 1 1 0 -1 4194304 120 0 3 0 " << stat->utime << ' '
                      << stat->stime << " 0 0 20 0 " << stat->num_threads << " 0 "
                      << stat->starttime << " 152000 500 0 0 0 0 0 0 0 0 0 0 0 0 0\n";
            test_util::write_file(tmp.path / "1" / "io", io_text.str());
            test_util::write_file(tmp.path / "1" / "stat", stat_text.str());
            if (!(pfs::read_io(tmp.path, 1) == io) || !(pfs::read_stat(tmp.path, 1) == stat)) {
                ok = false;
                detail += name + "/" + std::to_string(pid) + " not bit-exact; ";
            }
        }
    }
    if (trees < 10) {
        ok = false;
        detail += "only " + std::to_string(trees) + " fixture trees; ";
    }

    // Malformed fixtures are parse errors, not silent data.
    try {
        pfs::read_io(fixtures / "tree11_badio", 110);
        ok = false;
        detail += "bad io accepted; ";
    } catch (const ParseError&) {
    }
    try {
        pfs::read_stat(fixtures / "tree12_badstat", 120);
        ok = false;
        detail += "bad stat accepted; ";
    } catch (const ParseError&) {
    }

    // Poll on a 3-tick fixture: exactly 3 samples, then a clean stop.
    struct ScriptClock : pfs::Clock {
        std::int64_t now = 5000;
        std::int64_t ticks = 0;
        std::filesystem::path victim;
        std::int64_t now_ms() override { return now; }
        void sleep_ms(std::int64_t ms) override {
            now += ms;
            if (++ticks == 3)
                std::filesystem::remove_all(victim);
        }
    };
    test_util::TempDir tmp;
    std::filesystem::copy(fixtures / "tree10_poll", tmp.path / "tree10_poll",
                          std::filesystem::copy_options::recursive |
                              std::filesystem::copy_options::copy_symlinks);
    ScriptClock clock;
    clock.victim = tmp.path / "tree10_poll" / "900";
    std::ostringstream sink;
    pfs::PollResult polled = pfs::poll(tmp.path / "tree10_poll", 900, 50, sink, clock);
    if (polled.samples != 3) {
        ok = false;
        detail += "poll emitted " + std::to_string(polled.samples) + " samples; ";
    }
    report("procfs fixture corpus (bit-exact parse, 3-tick poll)", ok, detail);
}

void criterion_round_trips() {
    bool ok = true;
    std::string detail;
    test_util::TempDir dir;

    auto planted = synth::planted_signal_dataset(600, 9, "signal", 0.3, 0.05, 55);
    split_frame(planted.dataset, {0.6, 0.3, 0.1}, 55);
    assign_folds(planted.dataset, 5, 55);
    save_dataset(planted.dataset, dir.path / "ds");
    Dataset loaded = load_dataset(dir.path / "ds");
    if (loaded.fingerprint() != planted.dataset.fingerprint()) {
        ok = false;
        detail += "dataset fingerprint changed; ";
    }
    save_dataset(loaded, dir.path / "ds2");
    if (test_util::read_file(dir.path / "ds" / "data.csv") !=
        test_util::read_file(dir.path / "ds2" / "data.csv")) {
        ok = false;
        detail += "dataset store not stable; ";
    }

    ForestConfig cfg = default_config(55);
    cfg.n_trees = 25;
    Forest forest = train(planted.dataset, cfg);
    save_model(forest, dir.path / "model.txt");
    Forest reloaded = load_model(dir.path / "model.txt");

    Rng rng(77);
    for (int i = 0; i < 100; ++i) {
        auto row = static_cast<std::uint32_t>(rng.bounded(loaded.n_rows()));
        Prediction a = predict(forest, planted.dataset, row);
        Prediction b = predict(reloaded, loaded, row);
        if (a.p_failed != b.p_failed || a.p_succeeded != b.p_succeeded) {
            ok = false;
            detail += "prediction differs at row " + std::to_string(row) + "; ";
            break;
        }
    }
    report("store round-trips (dataset + model, bit-identical predictions)", ok, detail);
}

} // namespace

int main() {
    std::printf("taskseer acceptance suite\n");

    test_util::TempDir trace_dir;
    auto start = std::chrono::steady_clock::now();
    synth::Ledger ledger = table_trace(trace_dir.path);
    std::vector<TaskRecord> tasks = ingest_dir(trace_dir.path);

    criterion_table_reproduction(tasks, ledger, start);
    criterion_population_filter(tasks, ledger);
    criterion_split_fold_contracts();
    criterion_split_search_oracle();
    criterion_planted_signal();
    criterion_determinism();
    criterion_metrics_arithmetic();
    criterion_roc_properties();
    criterion_procfs_fixtures();
    criterion_round_trips();

    std::printf("%d/%d criteria passed\n", checks - failures, checks);
    return failures == 0 ? 0 : 1;
}
