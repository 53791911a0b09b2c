// Copyright (c) 2026 taskseer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Key-value config file shared by every CLI subcommand. Flags override file
// values; the effective configuration is echoed at startup so a run can be
// reproduced from its log.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "taskseer/categorize.hpp"
#include "taskseer/forest.hpp"
#include "taskseer/text.hpp"

namespace taskseer {

struct Config {
    std::vector<std::string> ignore_columns = {
        "id",           "AutoClusterId", "CommittedTime", "CompletionDate", "ExitCode",
        "LastVacateTime", "RemoteSysCpu",  "RemoteUserCpu", "RemoveReason",
    };
    std::size_t min_tasks = 5;
    std::array<double, 3> split_ratios = {0.6, 0.3, 0.1};
    ForestConfig forest;
    FailureRules rules;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    double threshold = 0.5;
    std::vector<std::string> usage_attributes = {"RemoteUserCpu", "RemoteSysCpu",
                                                 "CumulativeSuspensionTime", "BytesSent"};

    void validate() const {
        forest.validate();
        if (min_tasks < 2)
            throw Error("config: min_tasks must be >= 2");
        if (threads < 1)
            throw Error("config: threads must be >= 1");
        if (threshold < 0.0 || threshold > 1.0)
            throw Error("config: threshold must be in [0, 1]");
        double sum = split_ratios[0] + split_ratios[1] + split_ratios[2];
        if (split_ratios[0] <= 0 || split_ratios[1] <= 0 || split_ratios[2] <= 0 ||
            std::abs(sum - 1.0) > 1e-9)
            throw Error("config: split_ratios must be positive and sum to 1");
        // Force pattern compilation so a bad regex fails before any work runs.
        rules.attr_expr();
        rules.user_log();
        rules.oom();
        rules.no_file();
    }

    void apply(const std::string& key, const std::string& value);

    static Config load_file(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw Error("cannot open config file " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        return load_text(buf.str());
    }

    static Config load_text(const std::string& text) {
        Config cfg;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos)
                line = line.substr(0, hash);
            auto b = line.find_first_not_of(" \t\r");
            if (b == std::string::npos)
                continue;
            auto e = line.find_last_not_of(" \t\r");
            line = line.substr(b, e - b + 1);
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
            auto trim = [](std::string s) {
                auto bb = s.find_first_not_of(" \t");
                auto ee = s.find_last_not_of(" \t");
                if (bb == std::string::npos) return std::string();
                return s.substr(bb, ee - bb + 1);
            };
            try {
                cfg.apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
            } catch (const Error& err) {
                throw Error("config line " + std::to_string(lineno) + ": " + err.what());
            }
        }
        return cfg;
    }

    /// Effective-config lines for the run log.
    std::string describe() const {
        std::ostringstream out;
        auto list = [](const std::vector<std::string>& v) {
            std::string s;
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (i) s += ", ";
                s += v[i];
            }
            return s;
        };
        out << "ignore_columns = " << list(ignore_columns) << '\n';
        out << "min_tasks = " << min_tasks << '\n';
        out << "split_ratios = " << format_double(split_ratios[0]) << ", "
            << format_double(split_ratios[1]) << ", " << format_double(split_ratios[2]) << '\n';
        out << "seed = " << (seed ? std::to_string(*seed) : std::string("(unset)")) << '\n';
        out << "threads = " << threads << '\n';
        out << "threshold = " << format_double(threshold) << '\n';
        out << "usage_attributes = " << list(usage_attributes) << '\n';
        out << "forest.n_trees = " << forest.n_trees << '\n';
        out << "forest.max_depth = " << forest.max_depth << '\n';
        out << "forest.mtries = " << forest.mtries << '\n';
        out << "forest.nbins_numeric = " << forest.nbins_numeric << '\n';
        out << "forest.nbins_categorical = " << forest.nbins_categorical << '\n';
        out << "forest.min_rows_per_leaf = " << forest.min_rows_per_leaf << '\n';
        out << "forest.folds = " << forest.folds << '\n';
        out << "forest.row_sample_rate = " << format_double(forest.row_sample_rate) << '\n';
        out << "rules.attr_expr_pattern = " << rules.attr_expr_pattern << '\n';
        out << "rules.user_log_pattern = " << rules.user_log_pattern << '\n';
        out << "rules.oom_pattern = " << rules.oom_pattern << '\n';
        out << "rules.no_file_pattern = " << rules.no_file_pattern << '\n';
        return out.str();
    }
};

inline void Config::apply(const std::string& key, const std::string& value) {
    auto split_list = [](const std::string& v) {
        std::vector<std::string> parts;
        std::istringstream ls(v);
        std::string item;
        while (std::getline(ls, item, ',')) {
            auto b = item.find_first_not_of(" \t");
            auto e = item.find_last_not_of(" \t");
            if (b != std::string::npos)
                parts.push_back(item.substr(b, e - b + 1));
        }
        return parts;
    };
    if (key == "ignore_columns") {
        ignore_columns = split_list(value);
    } else if (key == "min_tasks") {
        min_tasks = static_cast<std::size_t>(parse_int(value));
    } else if (key == "split_ratios") {
        auto parts = split_list(value);
        if (parts.size() != 3)
            throw Error("split_ratios needs 3 values");
        for (std::size_t i = 0; i < 3; ++i)
            split_ratios[i] = parse_double(parts[i]);
    } else if (key == "seed") {
        seed = static_cast<std::uint64_t>(parse_int(value));
    } else if (key == "threads") {
        threads = static_cast<int>(parse_int(value));
    } else if (key == "threshold") {
        threshold = parse_double(value);
    } else if (key == "usage_attributes") {
        usage_attributes = split_list(value);
    } else if (key == "forest.n_trees") {
        forest.n_trees = static_cast<int>(parse_int(value));
    } else if (key == "forest.max_depth") {
        forest.max_depth = static_cast<int>(parse_int(value));
    } else if (key == "forest.mtries") {
        forest.mtries = static_cast<int>(parse_int(value));
    } else if (key == "forest.nbins_numeric") {
        forest.nbins_numeric = static_cast<int>(parse_int(value));
    } else if (key == "forest.nbins_categorical") {
        forest.nbins_categorical = static_cast<int>(parse_int(value));
    } else if (key == "forest.min_rows_per_leaf") {
        forest.min_rows_per_leaf = static_cast<int>(parse_int(value));
    } else if (key == "forest.folds") {
        forest.folds = static_cast<int>(parse_int(value));
    } else if (key == "forest.row_sample_rate") {
        forest.row_sample_rate = parse_double(value);
    } else if (key == "rules.attr_expr_pattern") {
        rules = FailureRules{value, rules.user_log_pattern, rules.oom_pattern, rules.no_file_pattern};
    } else if (key == "rules.user_log_pattern") {
        rules = FailureRules{rules.attr_expr_pattern, value, rules.oom_pattern, rules.no_file_pattern};
    } else if (key == "rules.oom_pattern") {
        rules = FailureRules{rules.attr_expr_pattern, rules.user_log_pattern, value, rules.no_file_pattern};
    } else if (key == "rules.no_file_pattern") {
        rules = FailureRules{rules.attr_expr_pattern, rules.user_log_pattern, rules.oom_pattern, value};
    } else {
        throw Error("unknown config key '" + key + "'");
    }
}

} // namespace taskseer
