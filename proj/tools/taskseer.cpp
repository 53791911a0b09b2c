// Copyright (c) 2026 taskseer contributors
// SPDX-License-Identifier: Apache-2.0
//
// taskseer: the cluster-trace analysis pipeline as one binary.
//
//   synth      generate a synthetic history trace with a ground-truth ledger
//   ingest     parse condor_history --json files into the task store
//   categorize submission taxonomy, failure breakdown, usage tables
//   dataset    select the modeling population and build the feature matrix
//   train      fit the random-forest failure predictor
//   evaluate   confusion matrix, metrics, ROC and variable importance
//   cv         k-fold cross-validation
//   sample     procfs task metric sampler
//
// Exit codes: 0 success, 1 usage error, 2 data/contract error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "taskseer/classad.hpp"
#include "taskseer/config.hpp"
#include "taskseer/dataset.hpp"
#include "taskseer/evaluate.hpp"
#include "taskseer/forest.hpp"
#include "taskseer/procfs.hpp"
#include "taskseer/synth.hpp"
#include "taskseer/task_record.hpp"

namespace fs = std::filesystem;
using namespace taskseer;

namespace {

constexpr const char* kVersionLine =
    "taskseer 1.0.0 (model format: taskseer-forest v1, dataset format: taskseer-dataset v1)";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void print_effective_config(const Config& cfg) {
    std::istringstream in(cfg.describe());
    std::string line;
    while (std::getline(in, line))
        std::cerr << "# config: " << line << '\n';
}

std::uint64_t require_seed(const Config& cfg) {
    if (!cfg.seed)
        throw UsageError("a seed is required: pass --seed or set it in the config file");
    return *cfg.seed;
}

std::vector<TaskRecord> load_task_store(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open task store " + path.string());
    return read_tasks_jsonl(in);
}

// --------------------------------------------------------------------------

int cmd_synth(const Config& cfg, const fs::path& spec_path, const fs::path& out_dir) {
    synth::SynthSpec spec = synth::parse_synth_spec_file(spec_path);
    if (cfg.seed)
        spec.seed = *cfg.seed;
    synth::Ledger ledger = synth::synth_trace(spec, out_dir);
    std::cout << "synth: " << ledger.n_submissions << " submissions, " << ledger.tasks_total
              << " tasks (" << ledger.tasks_failed << " failed) across " << spec.n_nodes
              << " node files in " << out_dir.string() << '\n';
    return 0;
}

int cmd_ingest(const Config&, const std::vector<fs::path>& inputs, const fs::path& out_path) {
    std::vector<NodeTasks> per_node;
    std::size_t parse_skipped = 0, normalize_skipped = 0;
    for (const fs::path& input : inputs) {
        std::string node = input.stem().string();
        if (node.rfind("history_", 0) == 0)
            node = node.substr(8);
        HistoryParse parsed = parse_history_file(input.string());
        parse_skipped += parsed.skipped;
        for (const std::string& w : parsed.warnings)
            std::cerr << "warning: " << input.string() << ": " << w << '\n';
        NodeTasks bucket{node, {}};
        bucket.tasks.reserve(parsed.ads.size());
        for (const ClassAd& ad : parsed.ads) {
            try {
                bucket.tasks.push_back(normalize_task(ad, node));
            } catch (const Error& e) {
                ++normalize_skipped;
                std::cerr << "warning: " << input.string() << ": " << e.what() << ", skipped\n";
            }
        }
        std::cerr << "ingest: " << input.string() << ": " << bucket.tasks.size() << " tasks, "
                  << parsed.skipped << " skipped elements\n";
        per_node.push_back(std::move(bucket));
    }
    MergeResult merged = merge_sources(per_node);
    std::ofstream out(out_path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + out_path.string());
    write_tasks_jsonl(merged.tasks, out);
    std::cout << "ingest: " << merged.tasks.size() << " tasks retained, "
              << merged.duplicates_dropped << " duplicates dropped, " << parse_skipped
              << " unparseable elements, " << normalize_skipped
              << " unnormalizable ads -> " << out_path.string() << '\n';
    return 0;
}

int cmd_categorize(const Config& cfg, const fs::path& tasks_path,
                   const std::optional<fs::path>& out_dir) {
    std::vector<TaskRecord> tasks = load_task_store(tasks_path);
    std::vector<SubmissionGroup> groups = group_by_submission(tasks);
    BreakdownTables tables = breakdown_report(groups, cfg.rules);
    std::cout << render_breakdown_text(tables) << '\n';
    std::vector<UsageStat> usage;
    usage.reserve(cfg.usage_attributes.size());
    for (const std::string& attr : cfg.usage_attributes)
        usage.push_back(usage_summary(tasks, attr));
    std::cout << render_usage_text(usage);
    if (out_dir) {
        fs::create_directories(*out_dir);
        write_tasks_breakdown_csv(tables, *out_dir / "tasks_breakdown.csv");
        write_errors_breakdown_csv(tables, *out_dir / "errors_breakdown.csv");
        write_submissions_breakdown_csv(tables, *out_dir / "submissions_breakdown.csv");
        write_usage_summary_csv(usage, *out_dir / "usage_summary.csv");
        std::cerr << "categorize: wrote 4 csv files to " << out_dir->string() << '\n';
    }
    return 0;
}

int cmd_dataset(const Config& cfg, const fs::path& tasks_path, const fs::path& out_dir) {
    std::uint64_t seed = require_seed(cfg);
    std::vector<TaskRecord> tasks = load_task_store(tasks_path);
    std::vector<SubmissionGroup> groups = group_by_submission(tasks);
    SelectionResult selection = select_training_population(groups, cfg.min_tasks);
    std::cerr << "dataset: " << selection.qualifying_groups << " qualifying submissions, "
              << selection.tasks.size() << " tasks selected, " << selection.indeterminate_dropped
              << " indeterminate dropped\n";
    BuildReport report;
    Dataset ds = build_dataset(selection.tasks, ignore_specs(cfg.ignore_columns), {}, &report);
    for (const std::string& w : report.warnings)
        std::cerr << "warning: " << w << '\n';
    split_frame(ds, cfg.split_ratios, seed);
    assign_folds(ds, cfg.forest.folds, seed);
    save_dataset(ds, out_dir);
    std::cout << "dataset: " << ds.n_rows() << " rows x " << ds.n_features() << " features -> "
              << out_dir.string() << '\n';
    return 0;
}

int cmd_train(const Config& cfg, const fs::path& dataset_dir, const fs::path& model_path) {
    ForestConfig fcfg = cfg.forest;
    fcfg.seed = require_seed(cfg);
    Dataset ds = load_dataset(dataset_dir);
    std::vector<std::uint32_t> rows = ds.rows_of_split(SplitPart::Train);
    Forest forest = train(ds, fcfg, rows, cfg.threads);
    save_model(forest, model_path);
    std::cout << "train: " << forest.trees.size() << " trees on " << rows.size()
              << " training rows -> " << model_path.string() << '\n';
    return 0;
}

std::vector<std::uint32_t> rows_for_split_name(const Dataset& ds, const std::string& name) {
    if (name == "all")
        return ds.all_rows();
    if (name == "train")
        return ds.rows_of_split(SplitPart::Train);
    if (name == "valid")
        return ds.rows_of_split(SplitPart::Valid);
    if (name == "test")
        return ds.rows_of_split(SplitPart::Test);
    throw UsageError("--split must be one of train|valid|test|all");
}

int cmd_evaluate(const Config& cfg, const fs::path& model_path, const fs::path& dataset_dir,
                 const fs::path& out_dir, const std::string& split_name) {
    Forest forest = load_model(model_path);
    Dataset ds = load_dataset(dataset_dir);
    std::vector<std::uint32_t> rows = rows_for_split_name(ds, split_name);
    if (rows.empty())
        throw Error("evaluate: no rows in split '" + split_name + "'");
    std::vector<ScoredLabel> scores;
    scores.reserve(rows.size());
    for (std::uint32_t r : rows)
        scores.push_back({predict(forest, ds, r).p_failed, ds.labels[r]});
    ConfusionMatrix cm = confusion_matrix(scores, cfg.threshold);
    ClassMetrics metrics = class_metrics(cm);
    RocCurve roc = roc_curve(scores);
    std::vector<ImportanceEntry> importance = variable_importance(forest);

    fs::create_directories(out_dir);
    write_metrics_json(metrics_to_json(cm, metrics, cfg.threshold, roc.auc),
                       out_dir / "metrics.json");
    write_roc_csv(roc, out_dir / "roc.csv");
    write_importance_csv(importance, out_dir / "importance.csv");

    auto pct = [](const std::optional<double>& v) {
        if (!v) return std::string("n/a");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f%%", *v * 100.0);
        return std::string(buf);
    };
    std::cout << "evaluate: " << rows.size() << " rows (" << split_name << ")\n"
              << "  precision failed    " << pct(metrics.precision_failed) << '\n'
              << "  recall failed       " << pct(metrics.recall_failed) << '\n'
              << "  precision succeeded " << pct(metrics.precision_succeeded) << '\n'
              << "  recall succeeded    " << pct(metrics.recall_succeeded) << '\n'
              << "  total error         " << pct(metrics.total_error) << '\n'
              << "  auc                 " << format_double(roc.auc) << '\n';
    if (!importance.empty())
        std::cout << "  top feature         " << importance.front().feature << '\n';
    return 0;
}

int cmd_cv(const Config& cfg, const fs::path& dataset_dir, const fs::path& out_dir) {
    ForestConfig fcfg = cfg.forest;
    fcfg.seed = require_seed(cfg);
    Dataset ds = load_dataset(dataset_dir);
    CVReport report = cross_validate(ds, fcfg, cfg.threads);
    RocCurve roc = roc_curve(report.pooled);

    fs::create_directories(out_dir);
    nlohmann::json j = metrics_to_json(report.cm, report.metrics, 0.5, roc.auc);
    nlohmann::json folds = nlohmann::json::array();
    for (const FoldResult& f : report.folds)
        folds.push_back(metrics_to_json(f.cm, f.metrics, 0.5));
    j["folds"] = std::move(folds);
    write_metrics_json(j, out_dir / "metrics.json");
    write_roc_csv(roc, out_dir / "roc.csv");

    std::cout << "cv: " << fcfg.folds << " folds, " << ds.n_rows() << " rows, pooled total error "
              << (report.metrics.total_error ? format_double(*report.metrics.total_error)
                                             : std::string("n/a"))
              << ", auc " << format_double(roc.auc) << '\n';
    return 0;
}

int cmd_sample(const Config&, std::int64_t pid, const fs::path& root, std::int64_t interval_ms,
               const std::optional<fs::path>& out_path, std::size_t max_ticks, bool snapshot) {
    procfs::SteadyClock clock;
    std::ofstream file;
    std::ostream* sink = &std::cout;
    if (out_path) {
        file.open(*out_path, std::ios::binary);
        if (!file)
            throw Error("cannot write " + out_path->string());
        sink = &file;
    }
    procfs::PollResult result =
        procfs::poll(root, pid, interval_ms, *sink, clock, max_ticks, snapshot);
    std::cerr << "sample: " << result.samples << " samples for pid " << pid << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cluster-trace analysis and task failure prediction toolkit"};
    app.set_version_flag("--version", kVersionLine);
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand

    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed_flag;
    std::optional<int> threads_flag;
    std::optional<int> train_trees, train_depth, train_mtries, folds_flag;
    app.add_option("--config", config_path, "key = value config file");
    app.add_option("--seed", seed_flag, "seed for every randomized step");
    app.add_option("--threads", threads_flag, "worker threads (results do not depend on this)");
    app.add_option("--trees", train_trees, "number of trees");
    app.add_option("--depth", train_depth, "max tree depth");
    app.add_option("--mtries", train_mtries, "features sampled per split");
    app.add_option("--folds", folds_flag, "cross-validation folds");

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic trace + ledger");
    std::string synth_spec, synth_out;
    synth_cmd->add_option("--spec", synth_spec, "synth spec file")->required();
    synth_cmd->add_option("--out", synth_out, "output directory")->required();

    auto* ingest_cmd = app.add_subcommand("ingest", "parse condor history JSON into the task store");
    std::vector<std::string> ingest_inputs;
    std::string ingest_out;
    ingest_cmd->add_option("inputs", ingest_inputs, "history JSON files (one per submit node)")
        ->required();
    ingest_cmd->add_option("--out", ingest_out, "output tasks.jsonl")->required();

    auto* cat_cmd = app.add_subcommand("categorize", "submission taxonomy and breakdown tables");
    std::string cat_tasks;
    std::optional<std::string> cat_out;
    cat_cmd->add_option("--tasks", cat_tasks, "tasks.jsonl store")->required();
    cat_cmd->add_option("--out-dir", cat_out, "directory for the csv tables");

    auto* ds_cmd = app.add_subcommand("dataset", "build the modeling dataset");
    std::string ds_tasks, ds_out;
    std::optional<std::size_t> ds_min_tasks;
    std::optional<std::vector<double>> ds_ratios;
    ds_cmd->add_option("--tasks", ds_tasks, "tasks.jsonl store")->required();
    ds_cmd->add_option("--out", ds_out, "output dataset directory")->required();
    ds_cmd->add_option("--min-tasks", ds_min_tasks, "population cutoff (default 5)");
    ds_cmd->add_option("--ratios", ds_ratios, "train,valid,test ratios")->expected(3);

    auto* train_cmd = app.add_subcommand("train", "train the failure predictor");
    std::string train_ds, train_model;
    train_cmd->add_option("--dataset", train_ds, "dataset directory")->required();
    train_cmd->add_option("--model", train_model, "output model file")->required();

    auto* eval_cmd = app.add_subcommand("evaluate", "metrics, ROC, importance for a trained model");
    std::string eval_model, eval_ds, eval_out, eval_split = "test";
    std::optional<double> eval_threshold;
    eval_cmd->add_option("--model", eval_model, "model file")->required();
    eval_cmd->add_option("--dataset", eval_ds, "dataset directory")->required();
    eval_cmd->add_option("--out-dir", eval_out, "output directory")->required();
    eval_cmd->add_option("--split", eval_split, "train|valid|test|all (default test)");
    eval_cmd->add_option("--threshold", eval_threshold, "decision threshold (default 0.5)");

    auto* cv_cmd = app.add_subcommand("cv", "k-fold cross-validation");
    std::string cv_ds, cv_out;
    cv_cmd->add_option("--dataset", cv_ds, "dataset directory")->required();
    cv_cmd->add_option("--out-dir", cv_out, "output directory")->required();

    auto* sample_cmd = app.add_subcommand("sample", "procfs task metric sampler");
    std::int64_t sample_pid = 0;
    std::string sample_root = "/proc";
    std::int64_t sample_interval = 1000;
    std::optional<std::string> sample_out;
    std::size_t sample_max_ticks = 0;
    bool sample_snapshot = false;
    sample_cmd->add_option("--pid", sample_pid, "root pid of the task tree")->required();
    sample_cmd->add_option("--root", sample_root, "procfs root (default /proc)");
    sample_cmd->add_option("--interval-ms", sample_interval, "tick interval (default 1000)");
    sample_cmd->add_option("--out", sample_out, "output JSONL (default stdout)");
    sample_cmd->add_option("--max-ticks", sample_max_ticks, "stop after N samples (0 = until exit)");
    sample_cmd->add_flag("--snapshot", sample_snapshot,
                         "emit a once-at-start context snapshot (cmdline, cwd, environ, status)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1; // usage errors exit 1; help/version exit 0
    }

    try {
        Config cfg;
        try {
            if (config_path)
                cfg = Config::load_file(*config_path);
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
        if (seed_flag)
            cfg.seed = *seed_flag;
        if (threads_flag)
            cfg.threads = *threads_flag;
        if (ds_min_tasks)
            cfg.min_tasks = *ds_min_tasks;
        if (ds_ratios)
            cfg.split_ratios = {(*ds_ratios)[0], (*ds_ratios)[1], (*ds_ratios)[2]};
        if (folds_flag)
            cfg.forest.folds = *folds_flag;
        if (train_trees)
            cfg.forest.n_trees = *train_trees;
        if (train_depth)
            cfg.forest.max_depth = *train_depth;
        if (train_mtries)
            cfg.forest.mtries = *train_mtries;
        if (eval_threshold)
            cfg.threshold = *eval_threshold;
        try {
            cfg.validate();
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
        print_effective_config(cfg);

        if (synth_cmd->parsed())
            return cmd_synth(cfg, synth_spec, synth_out);
        if (ingest_cmd->parsed()) {
            std::vector<fs::path> inputs(ingest_inputs.begin(), ingest_inputs.end());
            return cmd_ingest(cfg, inputs, ingest_out);
        }
        if (cat_cmd->parsed())
            return cmd_categorize(cfg, cat_tasks,
                                  cat_out ? std::optional<fs::path>(*cat_out) : std::nullopt);
        if (ds_cmd->parsed())
            return cmd_dataset(cfg, ds_tasks, ds_out);
        if (train_cmd->parsed())
            return cmd_train(cfg, train_ds, train_model);
        if (eval_cmd->parsed())
            return cmd_evaluate(cfg, eval_model, eval_ds, eval_out, eval_split);
        if (cv_cmd->parsed())
            return cmd_cv(cfg, cv_ds, cv_out);
        if (sample_cmd->parsed())
            return cmd_sample(cfg, sample_pid, sample_root, sample_interval,
                              sample_out ? std::optional<fs::path>(*sample_out) : std::nullopt,
                              sample_max_ticks, sample_snapshot);
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
