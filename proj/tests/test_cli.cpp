// Copyright (c) 2026 taskseer contributors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks against the built binary: exit codes, the full pipeline,
// idempotence, and thread-count independence of every artifact.

#include "doctest.h"

#include <cstdlib>
#include <string>
#include <sys/wait.h>

#include "taskseer/synth.hpp"

#include "test_util.hpp"

namespace {

const std::string kBin = TASKSEER_CLI_BIN;

int run(const std::string& args, const std::string& log = "/dev/null") {
    std::string cmd = kBin + " " + args + " > " + log + " 2>&1";
    int status = std::system(cmd.c_str());
    if (status == -1)
        return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_spec(const std::filesystem::path& path) {
    test_util::write_file(path,
                          "n_submissions = 120\n"
                          "tasks_per_multi_mean = 12\n"
                          "failure_rate_in_mixed = 0.2\n"
                          "n_nodes = 2\n"
                          "planted = PlantedLoad:numeric:0.8\n"
                          "seed = 5\n");
}

} // namespace

TEST_CASE("cli: usage errors exit 1") {
    CHECK(run("definitely-not-a-subcommand") == 1);
    CHECK(run("train --no-such-flag") == 1);
    CHECK(run("") == 1);

    test_util::TempDir dir;
    write_spec(dir.path / "synth.spec");
    // dataset without a seed anywhere is a usage error before any side effect
    std::string out_dir = (dir.path / "ds").string();
    CHECK(run("dataset --tasks /nonexistent --out " + out_dir) == 1);
    CHECK(!std::filesystem::exists(dir.path / "ds"));
}

TEST_CASE("cli: --version exits 0 and names the format versions") {
    test_util::TempDir dir;
    std::string log = (dir.path / "version.txt").string();
    CHECK(run("--version", log) == 0);
    std::string text = test_util::read_file(log);
    CHECK(text.find("taskseer-forest v1") != std::string::npos);
    CHECK(text.find("taskseer-dataset v1") != std::string::npos);
}

TEST_CASE("cli: data errors exit 2") {
    test_util::TempDir dir;
    test_util::write_file(dir.path / "broken.json", "[{\"ClusterId\": 1");
    CHECK(run("ingest " + (dir.path / "broken.json").string() + " --out " +
              (dir.path / "tasks.jsonl").string()) == 2);
    CHECK(run("categorize --tasks " + (dir.path / "missing.jsonl").string()) == 2);
}

TEST_CASE("cli: full pipeline runs and is idempotent") {
    test_util::TempDir dir;
    const std::string base = dir.path.string();
    write_spec(dir.path / "synth.spec");

    REQUIRE(run("synth --spec " + base + "/synth.spec --out " + base + "/trace --seed 5") == 0);
    REQUIRE(std::filesystem::exists(dir.path / "trace" / "ledger.json"));

    REQUIRE(run("ingest " + base + "/trace/history_submit01.json " + base +
                "/trace/history_submit02.json --out " + base + "/tasks.jsonl") == 0);

    REQUIRE(run("categorize --tasks " + base + "/tasks.jsonl --out-dir " + base + "/reports") == 0);
    for (const char* f : {"tasks_breakdown.csv", "errors_breakdown.csv",
                          "submissions_breakdown.csv", "usage_summary.csv"})
        CHECK(std::filesystem::exists(dir.path / "reports" / f));

    REQUIRE(run("dataset --tasks " + base + "/tasks.jsonl --out " + base + "/ds --seed 11") == 0);
    REQUIRE(std::filesystem::exists(dir.path / "ds" / "schema.json"));

    REQUIRE(run("train --dataset " + base + "/ds --model " + base + "/model.txt --seed 11 "
                "--trees 20 --mtries 5") == 0);

    REQUIRE(run("evaluate --model " + base + "/model.txt --dataset " + base +
                "/ds --out-dir " + base + "/eval --split all") == 0);
    for (const char* f : {"metrics.json", "roc.csv", "importance.csv"})
        CHECK(std::filesystem::exists(dir.path / "eval" / f));

    REQUIRE(run("cv --dataset " + base + "/ds --out-dir " + base + "/cv --seed 11 "
                "--trees 20 --mtries 5") == 0);
    CHECK(std::filesystem::exists(dir.path / "cv" / "metrics.json"));
    CHECK(std::filesystem::exists(dir.path / "cv" / "roc.csv"));

    SUBCASE("rerunning with identical inputs is byte-identical") {
        REQUIRE(run("synth --spec " + base + "/synth.spec --out " + base + "/trace2 --seed 5") == 0);
        CHECK(test_util::read_file(dir.path / "trace" / "history_submit01.json") ==
              test_util::read_file(dir.path / "trace2" / "history_submit01.json"));

        REQUIRE(run("dataset --tasks " + base + "/tasks.jsonl --out " + base +
                    "/ds2 --seed 11") == 0);
        CHECK(test_util::read_file(dir.path / "ds" / "data.csv") ==
              test_util::read_file(dir.path / "ds2" / "data.csv"));

        REQUIRE(run("train --dataset " + base + "/ds --model " + base + "/model2.txt --seed 11 "
                    "--trees 20 --mtries 5") == 0);
        CHECK(test_util::read_file(dir.path / "model.txt") ==
              test_util::read_file(dir.path / "model2.txt"));
    }

    SUBCASE("thread count changes no artifact byte") {
        REQUIRE(run("train --dataset " + base + "/ds --model " + base + "/model_t8.txt --seed 11 "
                    "--trees 20 --mtries 5 --threads 8") == 0);
        CHECK(test_util::read_file(dir.path / "model.txt") ==
              test_util::read_file(dir.path / "model_t8.txt"));

        REQUIRE(run("evaluate --model " + base + "/model_t8.txt --dataset " + base +
                    "/ds --out-dir " + base + "/eval_t8 --split all") == 0);
        for (const char* f : {"metrics.json", "roc.csv", "importance.csv"})
            CHECK(test_util::read_file(dir.path / "eval" / f) ==
                  test_util::read_file(dir.path / "eval_t8" / f));

        REQUIRE(run("cv --dataset " + base + "/ds --out-dir " + base + "/cv_t8 --seed 11 "
                    "--trees 20 --mtries 5 --threads 8") == 0);
        CHECK(test_util::read_file(dir.path / "cv" / "metrics.json") ==
              test_util::read_file(dir.path / "cv_t8" / "metrics.json"));
        CHECK(test_util::read_file(dir.path / "cv" / "roc.csv") ==
              test_util::read_file(dir.path / "cv_t8" / "roc.csv"));
    }
}

TEST_CASE("cli: sample reads a fixture procfs tree") {
    test_util::TempDir dir;
    std::filesystem::path root = std::filesystem::path(TASKSEER_FIXTURES) / "procfs" /
                                 "tree04_children";
    std::string out = (dir.path / "stream.jsonl").string();
    REQUIRE(run("sample --pid 300 --root " + root.string() + " --interval-ms 20 --max-ticks 2 "
                "--out " + out) == 0);
    std::string text = test_util::read_file(out);
    CHECK(text.find("\"kind\":\"header\"") != std::string::npos);
    CHECK(text.find("\"kind\":\"sample\"") != std::string::npos);

    SUBCASE("a short interval is rejected up front") {
        CHECK(run("sample --pid 300 --root " + root.string() + " --interval-ms 5") == 2);
    }
}

TEST_CASE("cli: config file drives defaults, flags override") {
    test_util::TempDir dir;
    const std::string base = dir.path.string();
    write_spec(dir.path / "synth.spec");
    test_util::write_file(dir.path / "taskseer.conf",
                          "seed = 5\n"
                          "threads = 2\n"
                          "forest.n_trees = 10\n"
                          "forest.mtries = 5\n"
                          "min_tasks = 5\n");
    REQUIRE(run("synth --spec " + base + "/synth.spec --out " + base + "/trace --config " + base +
                "/taskseer.conf") == 0);
    REQUIRE(run("ingest " + base + "/trace/history_submit01.json " + base +
                "/trace/history_submit02.json --out " + base + "/tasks.jsonl") == 0);
    // seed comes from the config file now
    REQUIRE(run("dataset --tasks " + base + "/tasks.jsonl --out " + base + "/ds --config " + base +
                "/taskseer.conf") == 0);
    REQUIRE(run("train --dataset " + base + "/ds --model " + base + "/model.txt --config " + base +
                "/taskseer.conf") == 0);

    SUBCASE("a bad config key is a usage error") {
        test_util::write_file(dir.path / "bad.conf", "no_such_key = 1\n");
        CHECK(run("categorize --tasks " + base + "/tasks.jsonl --config " + base + "/bad.conf") ==
              1);
    }
}
