// Copyright (c) 2026 taskseer contributors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <functional>
#include <sstream>

#include "taskseer/procfs.hpp"

#include "test_util.hpp"

using namespace taskseer;
using namespace taskseer::procfs;

namespace {

const std::filesystem::path kFixtures = std::filesystem::path(TASKSEER_FIXTURES) / "procfs";

/// Deterministic clock; runs a hook before every sleep so tests can mutate or
/// remove the fixture between ticks.
class FakeClock : public Clock {
public:
    std::int64_t now = 1000;
    std::int64_t ticks = 0;
    std::function<void(std::int64_t)> on_sleep;

    std::int64_t now_ms() override { return now; }
    void sleep_ms(std::int64_t ms) override {
        ++ticks;
        if (on_sleep)
            on_sleep(ticks);
        now += ms;
    }
};

/// Copy a fixture tree into a scratch dir so tests can mutate it.
std::filesystem::path clone_fixture(const test_util::TempDir& dir, const std::string& name) {
    std::filesystem::path dst = dir.path / name;
    std::filesystem::copy(kFixtures / name, dst,
                          std::filesystem::copy_options::recursive |
                              std::filesystem::copy_options::copy_symlinks);
    return dst;
}

std::string io_text(const IoCounters& io) {
    std::ostringstream out;
    out << "rchar: " << io.rchar << "\nwchar: " << io.wchar << "\nsyscr: " << io.syscr
        << "\nsyscw: " << io.syscw << "\nread_bytes: " << io.read_bytes
        << "\nwrite_bytes: " << io.write_bytes
        << "\ncancelled_write_bytes: " << io.cancelled_write_bytes << '\n';
    return out.str();
}

std::string stat_text(const StatRecord& s) {
    std::ostringstream out;
    out << s.pid << " (" << s.comm << ") " << s.state << ' ' << s.ppid
        << " 1 1 0 -1 4194304 120 0 3 0 " << s.utime << ' ' << s.stime << " 0 0 20 0 "
        << s.num_threads << " 0 " << s.starttime << " 152000 500 0 0 0 0 0 0 0 0 0 0 0 0 0\n";
    return out.str();
}

} // namespace

TEST_CASE("read_io: seven required counters, unknown keys ignored") {
    auto io = read_io(kFixtures / "tree01_single", 100);
    REQUIRE(io);
    CHECK(io->rchar == 100);
    CHECK(io->wchar == 50);
    CHECK(io->syscr == 10);
    CHECK(io->syscw == 5);
    CHECK(io->read_bytes == 400);
    CHECK(io->write_bytes == 200);
    CHECK(io->cancelled_write_bytes == 0);

    SUBCASE("missing required key is a parse error") {
        CHECK_THROWS_AS(read_io(kFixtures / "tree11_badio", 110), ParseError);
    }
    SUBCASE("absent file is a transient miss") {
        CHECK(!read_io(kFixtures / "tree01_single", 9999));
    }
    SUBCASE("malformed line names the line") {
        test_util::TempDir dir;
        std::filesystem::create_directories(dir.path / "5");
        test_util::write_file(dir.path / "5" / "io", "rchar 100\n");
        try {
            read_io(dir.path, 5);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("line 1") != std::string::npos);
        }
    }
}

TEST_CASE("read_stat: comm runs to the LAST close paren") {
    auto plain = read_stat(kFixtures / "tree01_single", 100);
    REQUIRE(plain);
    CHECK(plain->pid == 100);
    CHECK(plain->comm == "worker");
    CHECK(plain->state == 'S');
    CHECK(plain->ppid == 1);
    CHECK(plain->utime == 7);
    CHECK(plain->stime == 3);
    CHECK(plain->num_threads == 1);
    CHECK(plain->starttime == 8000);

    SUBCASE("comm with spaces") {
        auto spaced = read_stat(kFixtures / "tree02_spaces", 200);
        REQUIRE(spaced);
        CHECK(spaced->comm == "my task");
        CHECK(spaced->utime == 11);
    }
    SUBCASE("comm with parentheses") {
        auto parens = read_stat(kFixtures / "tree03_parens", 42);
        REQUIRE(parens);
        CHECK(parens->comm == "a)b");
        CHECK(parens->state == 'S');
    }
    SUBCASE("no close paren is a parse error") {
        CHECK_THROWS_AS(read_stat(kFixtures / "tree12_badstat", 120), ParseError);
    }
    SUBCASE("absent file is a transient miss") {
        CHECK(!read_stat(kFixtures / "tree01_single", 9999));
    }
}

TEST_CASE("read_statm: second field, in pages") {
    CHECK(read_statm(kFixtures / "tree01_single", 100) == 250);
    CHECK(read_statm(kFixtures / "tree06_zero", 500) == 0);

    SUBCASE("empty file is a parse error") {
        test_util::TempDir dir;
        std::filesystem::create_directories(dir.path / "6");
        test_util::write_file(dir.path / "6" / "statm", "");
        CHECK_THROWS_AS(read_statm(dir.path, 6), ParseError);
    }
    SUBCASE("one field is a parse error") {
        test_util::TempDir dir;
        std::filesystem::create_directories(dir.path / "7");
        test_util::write_file(dir.path / "7" / "statm", "1000\n");
        CHECK_THROWS_AS(read_statm(dir.path, 7), ParseError);
    }
}

TEST_CASE("child_pids: transitive closure over task/*/children") {
    CHECK(child_pids(kFixtures / "tree01_single", 100).empty());
    CHECK(child_pids(kFixtures / "tree04_children", 300) ==
          std::vector<std::int64_t>{301, 302, 303});
    CHECK(child_pids(kFixtures / "tree09_deep", 800) ==
          std::vector<std::int64_t>{801, 802, 803, 804});

    SUBCASE("children across multiple task dirs are unioned") {
        CHECK(child_pids(kFixtures / "tree08_threads", 700) ==
              std::vector<std::int64_t>{701, 702});
    }
    SUBCASE("an exited child stays listed; its own subtree reads as empty") {
        CHECK(child_pids(kFixtures / "tree05_exit_mid", 400) ==
              std::vector<std::int64_t>{401, 999});
    }
}

TEST_CASE("sample_tree: per-pid reads summed") {
    ProcSample one = sample_tree(kFixtures / "tree01_single", 100, 1234);
    CHECK(one.timestamp_ms == 1234);
    CHECK(one.root_pid == 100);
    CHECK(one.pids == std::vector<std::int64_t>{100});
    CHECK(one.io.rchar == 100);
    CHECK(one.utime == 7);
    CHECK(one.stime == 3);
    CHECK(one.rss_pages == 250);
    CHECK(one.oom_scores.at(100) == 42);
    CHECK(one.misses.empty());

    SUBCASE("two-level tree sums every descendant") {
        ProcSample tree = sample_tree(kFixtures / "tree04_children", 300, 1);
        CHECK(tree.pids == std::vector<std::int64_t>{300, 301, 302, 303});
        CHECK(tree.io.rchar == 100 + 50 + 25 + 12);
        CHECK(tree.io.wchar == 40 + 20 + 10 + 6);
        CHECK(tree.utime == 7 + 3 + 2 + 1);
        CHECK(tree.stime == 3 + 1 + 1 + 0);
        CHECK(tree.rss_pages == 250 + 100 + 60 + 40);
        CHECK(tree.oom_scores.size() == 4);
        // Internal consistency: totals equal the per-pid reads.
        IoCounters sum;
        for (std::int64_t p : tree.pids)
            sum += *read_io(kFixtures / "tree04_children", p);
        CHECK(sum == tree.io);
    }
    SUBCASE("vanished pid contributes nothing and lands in misses") {
        ProcSample s = sample_tree(kFixtures / "tree05_exit_mid", 400, 1);
        CHECK(s.pids == std::vector<std::int64_t>{400, 401, 999});
        CHECK(s.misses == std::vector<std::int64_t>{999});
        CHECK(s.io.rchar == 200 + 100);
    }
    SUBCASE("large counters survive") {
        ProcSample big = sample_tree(kFixtures / "tree07_large", 600, 1);
        CHECK(big.io.rchar == 1152921504606846976ULL);
    }
    SUBCASE("absent root is target-gone") {
        CHECK_THROWS_AS(sample_tree(kFixtures / "tree01_single", 31337, 1), TargetGoneError);
    }
}

TEST_CASE("parsers are bit-exact: serialize then reparse equals the original") {
    test_util::TempDir dir;
    for (const auto& entry : std::filesystem::directory_iterator(kFixtures)) {
        std::string name = entry.path().filename().string();
        if (name == "tree11_badio" || name == "tree12_badstat")
            continue;
        for (const auto& pid_dir : std::filesystem::directory_iterator(entry.path())) {
            std::int64_t pid = parse_int(pid_dir.path().filename().string());
            auto io = read_io(entry.path(), pid);
            auto stat = read_stat(entry.path(), pid);
            REQUIRE(io);
            REQUIRE(stat);
            std::filesystem::create_directories(dir.path / "1");
            test_util::write_file(dir.path / "1" / "io", io_text(*io));
            test_util::write_file(dir.path / "1" / "stat", stat_text(*stat));
            CHECK(*read_io(dir.path, 1) == *io);
            CHECK(*read_stat(dir.path, 1) == *stat);
        }
    }
}

TEST_CASE("poll: samples per tick until the target goes away") {
    test_util::TempDir dir;
    auto root = clone_fixture(dir, "tree10_poll");
    FakeClock clock;
    clock.on_sleep = [&](std::int64_t tick) {
        if (tick == 3)
            std::filesystem::remove_all(root / "900");
    };
    std::ostringstream sink;
    PollResult result = poll(root, 900, 50, sink, clock);
    CHECK(result.samples == 3);

    // Header line plus one JSONL sample per tick, timestamps strictly rising.
    std::istringstream lines(sink.str());
    std::string line;
    REQUIRE(std::getline(lines, line));
    auto header = nlohmann::json::parse(line);
    CHECK(header.at("kind") == "header");
    CHECK(header.at("root_pid") == 900);
    CHECK(header.at("ticks_per_second").get<std::int64_t>() > 0);
    CHECK(header.at("page_size").get<std::int64_t>() > 0);
    std::int64_t prev_ts = -1;
    std::size_t samples = 0;
    while (std::getline(lines, line)) {
        auto sample = nlohmann::json::parse(line);
        CHECK(sample.at("kind") == "sample");
        std::int64_t ts = sample.at("timestamp_ms").get<std::int64_t>();
        CHECK(ts > prev_ts);
        prev_ts = ts;
        ++samples;
    }
    CHECK(samples == 3);
}

TEST_CASE("snapshot_context: once-at-start identity, absent files omitted") {
    auto snap = snapshot_context(kFixtures / "tree10_poll", 900);
    CHECK(snap.at("kind") == "snapshot");
    CHECK(snap.at("cmdline") == "/opt/jobs/batch_2.sh --input /data/run7");
    CHECK(snap.at("environ") == "PATH=/usr/bin HOME=/home/user3");
    CHECK(snap.at("cwd") == "/data/run7");
    CHECK(snap.at("status").get<std::string>().find("Name:\tpolled") == 0);

    // tree01 has no snapshot files: only the identity keys appear.
    auto bare = snapshot_context(kFixtures / "tree01_single", 100);
    CHECK(!bare.contains("cmdline"));
    CHECK(!bare.contains("cwd"));

    SUBCASE("poll emits the snapshot line right after the header") {
        test_util::TempDir dir;
        auto root = clone_fixture(dir, "tree10_poll");
        FakeClock clock;
        std::ostringstream sink;
        poll(root, 900, 50, sink, clock, 1, true);
        std::istringstream lines(sink.str());
        std::string line;
        std::getline(lines, line);
        CHECK(nlohmann::json::parse(line).at("kind") == "header");
        std::getline(lines, line);
        CHECK(nlohmann::json::parse(line).at("kind") == "snapshot");
        std::getline(lines, line);
        CHECK(nlohmann::json::parse(line).at("kind") == "sample");
    }
}

TEST_CASE("poll: contract and failure paths") {
    test_util::TempDir dir;
    auto root = clone_fixture(dir, "tree10_poll");
    FakeClock clock;
    std::ostringstream sink;

    SUBCASE("interval below 10ms is a contract violation") {
        CHECK_THROWS_AS(poll(root, 900, 5, sink, clock), ContractError);
    }
    SUBCASE("max_ticks bounds the stream") {
        PollResult r = poll(root, 900, 50, sink, clock, 2);
        CHECK(r.samples == 2);
    }
    SUBCASE("sink write failure aborts with an error") {
        class FailingBuf : public std::streambuf {
            int_type overflow(int_type) override { return traits_type::eof(); }
        } buf;
        std::ostream bad(&buf);
        CHECK_THROWS_AS(poll(root, 900, 50, bad, clock, 2), Error);
    }
}

TEST_CASE("poll: monotone counters pass through; decreases are flagged") {
    test_util::TempDir dir;
    auto root = clone_fixture(dir, "tree10_poll");
    FakeClock clock;

    SUBCASE("increasing fixture counters give monotone samples and no anomalies") {
        clock.on_sleep = [&](std::int64_t tick) {
            IoCounters io = *read_io(root, 900);
            io.rchar += 100;
            io.wchar += 10;
            test_util::write_file(root / "900" / "io", io_text(io));
        };
        std::ostringstream sink;
        poll(root, 900, 50, sink, clock, 3);
        std::istringstream lines(sink.str());
        std::string line;
        std::getline(lines, line); // header
        std::uint64_t prev = 0;
        while (std::getline(lines, line)) {
            auto sample = nlohmann::json::parse(line);
            std::uint64_t rchar = sample.at("io").at("rchar").get<std::uint64_t>();
            CHECK(rchar >= prev);
            prev = rchar;
            CHECK(sample.at("anomalies").empty());
        }
    }
    SUBCASE("a decreasing cumulative counter is flagged, not dropped") {
        clock.on_sleep = [&](std::int64_t tick) {
            IoCounters io = *read_io(root, 900);
            io.rchar = 1; // counter went backwards
            test_util::write_file(root / "900" / "io", io_text(io));
        };
        std::ostringstream sink;
        poll(root, 900, 50, sink, clock, 2);
        std::istringstream lines(sink.str());
        std::string line;
        std::getline(lines, line); // header
        std::getline(lines, line); // first sample: nothing to compare against
        CHECK(nlohmann::json::parse(line).at("anomalies").empty());
        std::getline(lines, line);
        auto flagged = nlohmann::json::parse(line);
        REQUIRE(flagged.at("anomalies").size() == 1);
        std::string msg = flagged.at("anomalies")[0].get<std::string>();
        CHECK(msg.find("rchar decreased") != std::string::npos);
    }
}
