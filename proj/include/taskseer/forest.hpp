// Copyright (c) 2026 taskseer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Random-forest classifier over the mixed-type feature matrix. Numeric
// candidates come from equal-width histograms, categorical candidates from
// prefix cuts of the failure-rate category order; missing values are routed
// to the side that maximizes gain, never imputed. Tree i is seeded from
// (config.seed, i), so the forest is byte-identical for any thread count.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "taskseer/dataset.hpp"
#include "taskseer/evaluate.hpp"
#include "taskseer/rng.hpp"
#include "taskseer/text.hpp"

namespace taskseer {

struct ForestConfig {
    int n_trees = 50;
    int max_depth = 50;
    int mtries = 5;
    int nbins_numeric = 1000;
    int nbins_categorical = 1024;
    int min_rows_per_leaf = 1;
    std::uint64_t seed = 0;
    int folds = 5;
    double row_sample_rate = 1.0; // bootstrap sample size as a fraction of n
    bool bootstrap = true;        // test hook: false trains each tree on the rows as given

    void validate() const {
        if (n_trees < 1 || max_depth < 1 || mtries < 1 || nbins_numeric < 2 ||
            nbins_categorical < 2 || min_rows_per_leaf < 1 || folds < 1)
            throw ContractError("forest config: all parameters must be positive");
        if (row_sample_rate <= 0.0 || row_sample_rate > 1.0)
            throw ContractError("forest config: row_sample_rate must be in (0, 1]");
    }
};

/// Gini impurity of a two-class count pair.
inline double gini(double n_failed, double n_succeeded) {
    double total = n_failed + n_succeeded;
    if (!(total > 0.0))
        throw ContractError("gini: empty class counts");
    double pf = n_failed / total;
    double ps = n_succeeded / total;
    return 1.0 - pf * pf - ps * ps;
}

namespace detail {

inline int bin_index(double v, double lo, double width, int nbins) {
    int idx = static_cast<int>((v - lo) / width);
    if (idx < 0) idx = 0;
    if (idx >= nbins) idx = nbins - 1;
    return idx;
}

inline double gini_counts(std::uint64_t f, std::uint64_t s) {
    return gini(static_cast<double>(f), static_cast<double>(s));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Histogram and category-order primitives. These are the candidate-generating
// machinery of the split search; the tree builder runs the same arithmetic
// through reusable buffers.

struct HistogramResult {
    double lo = 0.0;
    double hi = 0.0;
    double width = 0.0;
    int nbins = 0;
    std::vector<std::array<std::uint64_t, 2>> bins; // [bin] -> {n_failed, n_succeeded}
    std::array<std::uint64_t, 2> missing{0, 0};     // the dedicated extra bin

    std::uint64_t total() const {
        std::uint64_t t = missing[0] + missing[1];
        for (const auto& b : bins)
            t += b[0] + b[1];
        return t;
    }
};

/// Equal-width class-count histogram over the non-missing values. A constant
/// column occupies a single bin; an all-missing column has only the missing
/// bin.
inline HistogramResult histogram_numeric(const std::vector<double>& values,
                                         const std::vector<std::uint8_t>& missing,
                                         const std::vector<Outcome>& labels, int nbins) {
    if (nbins < 2)
        throw ContractError("histogram_numeric: nbins must be >= 2");
    HistogramResult h;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    std::size_t defined = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::size_t l = labels[i] == Outcome::Failed ? 0 : 1;
        if (!missing.empty() && missing[i]) {
            h.missing[l] += 1;
            continue;
        }
        ++defined;
        lo = std::min(lo, values[i]);
        hi = std::max(hi, values[i]);
    }
    if (defined == 0)
        return h;
    h.lo = lo;
    h.hi = hi;
    if (lo == hi) {
        h.nbins = 1;
        h.width = 0.0;
        h.bins.assign(1, {0, 0});
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!missing.empty() && missing[i]) continue;
            h.bins[0][labels[i] == Outcome::Failed ? 0 : 1] += 1;
        }
        return h;
    }
    h.nbins = nbins;
    h.width = (hi - lo) / static_cast<double>(nbins);
    h.bins.assign(static_cast<std::size_t>(nbins), {0, 0});
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!missing.empty() && missing[i]) continue;
        int idx = detail::bin_index(values[i], lo, h.width, nbins);
        h.bins[static_cast<std::size_t>(idx)][labels[i] == Outcome::Failed ? 0 : 1] += 1;
    }
    return h;
}

struct CategoryGroup {
    std::vector<std::int32_t> ids; // more than one id only for the overflow group
    std::uint64_t n_failed = 0;
    std::uint64_t n_succeeded = 0;

    double failure_rate() const {
        return static_cast<double>(n_failed) / static_cast<double>(n_failed + n_succeeded);
    }
    std::int32_t min_id() const { return ids.front(); }
};

/// Order the categories present in `values` ascending by P(Failed|category),
/// ties by category id. When more categories are present than the bin budget
/// allows, the rarest ones beyond the budget merge into one overflow group.
/// For two classes with Gini impurity, prefix cuts of this order contain the
/// optimal category subset.
inline std::vector<CategoryGroup> order_categories(const std::vector<std::int32_t>& values,
                                                   const std::vector<std::uint8_t>& missing,
                                                   const std::vector<Outcome>& labels,
                                                   int nbins_categorical) {
    std::map<std::int32_t, std::array<std::uint64_t, 2>> counts;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!missing.empty() && missing[i]) continue;
        counts[values[i]][labels[i] == Outcome::Failed ? 0 : 1] += 1;
    }
    if (counts.empty())
        throw ContractError("order_categories: no category present");

    std::vector<CategoryGroup> groups;
    groups.reserve(counts.size());
    for (const auto& [id, c] : counts)
        groups.push_back({{id}, c[0], c[1]});

    if (static_cast<int>(groups.size()) > nbins_categorical) {
        std::stable_sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) {
            std::uint64_t ta = a.n_failed + a.n_succeeded, tb = b.n_failed + b.n_succeeded;
            if (ta != tb) return ta > tb;
            return a.min_id() < b.min_id();
        });
        CategoryGroup overflow;
        for (std::size_t i = static_cast<std::size_t>(nbins_categorical) - 1; i < groups.size(); ++i) {
            overflow.ids.insert(overflow.ids.end(), groups[i].ids.begin(), groups[i].ids.end());
            overflow.n_failed += groups[i].n_failed;
            overflow.n_succeeded += groups[i].n_succeeded;
        }
        groups.resize(static_cast<std::size_t>(nbins_categorical) - 1);
        std::sort(overflow.ids.begin(), overflow.ids.end());
        groups.push_back(std::move(overflow));
    }
    std::sort(groups.begin(), groups.end(), [](const CategoryGroup& a, const CategoryGroup& b) {
        double ra = a.failure_rate(), rb = b.failure_rate();
        if (ra != rb) return ra < rb;
        return a.min_id() < b.min_id();
    });
    return groups;
}

// ---------------------------------------------------------------------------
// Splits and trees.

enum class SplitKind : std::uint8_t { NumericThreshold, CategorySubset };

struct Split {
    std::int32_t feature = -1; // column index; -1 marks a leaf node
    SplitKind kind = SplitKind::NumericThreshold;
    double threshold = 0.0;            // NumericThreshold: left iff value < threshold
    std::vector<std::int32_t> subset;  // CategorySubset: sorted ids going left
    bool missing_left = true;
};

struct TreeNode {
    Split split;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint64_t n_failed = 0;    // rows (with bootstrap multiplicity) at this node
    std::uint64_t n_succeeded = 0;
    double gain = 0.0;             // internal nodes only

    bool is_leaf() const { return split.feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes; // root at index 0, preorder
};

struct ForestSchemaColumn {
    std::string name;
    FeatureKind kind = FeatureKind::Numeric;
    std::vector<std::string> categories;
};

struct Forest {
    ForestConfig config;
    std::uint64_t fingerprint = 0;
    std::vector<ForestSchemaColumn> schema;
    std::vector<Tree> trees;
};

struct SplitCandidate {
    Split split;
    double gain = 0.0;
};

// ---------------------------------------------------------------------------
// Split search.

namespace detail {

/// Reusable split-search state. The per-bin arrays use an epoch stamp instead
/// of clearing, which keeps small deep nodes cheap with a 1000-bin budget.
class SplitFinder {
public:
    SplitFinder(const Dataset& ds, const ForestConfig& cfg) : ds_(&ds), cfg_(cfg) {
        std::size_t slots = static_cast<std::size_t>(cfg.nbins_numeric);
        for (const Column& c : ds.columns)
            slots = std::max(slots, c.category_count());
        counts_.assign(slots + 1, {0, 0});
        stamp_.assign(slots + 1, 0);
        name_rank_.resize(ds.columns.size());
        std::vector<std::size_t> order(ds.columns.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&ds](std::size_t a, std::size_t b) {
            return ds.columns[a].spec.name < ds.columns[b].spec.name;
        });
        for (std::size_t rank = 0; rank < order.size(); ++rank)
            name_rank_[order[rank]] = static_cast<int>(rank);
    }

    std::optional<SplitCandidate> find(std::span<const std::uint32_t> rows,
                                       const std::vector<std::int32_t>& candidates,
                                       std::uint64_t node_failed, std::uint64_t node_succeeded) {
        best_valid_ = false;
        if (node_failed == 0 || node_succeeded == 0)
            return std::nullopt;
        node_total_ = node_failed + node_succeeded;
        parent_gini_ = gini_counts(node_failed, node_succeeded);
        for (std::int32_t f : candidates) {
            const Column& col = ds_->columns[static_cast<std::size_t>(f)];
            if (col.is_numeric())
                eval_numeric(col, f, rows);
            else
                eval_categorical(col, f, rows);
        }
        if (!best_valid_ || best_.gain <= 0.0)
            return std::nullopt;
        return best_;
    }

private:
    void touch(std::int32_t slot) {
        auto s = static_cast<std::size_t>(slot);
        if (stamp_[s] != epoch_) {
            stamp_[s] = epoch_;
            counts_[s] = {0, 0};
            touched_.push_back(slot);
        }
    }

    void eval_numeric(const Column& col, std::int32_t feature,
                      std::span<const std::uint32_t> rows) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        std::uint64_t miss_f = 0, miss_s = 0;
        for (std::uint32_t r : rows) {
            if (col.missing[r]) {
                (ds_->labels[r] == Outcome::Failed ? miss_f : miss_s) += 1;
                continue;
            }
            lo = std::min(lo, col.num[r]);
            hi = std::max(hi, col.num[r]);
        }
        std::uint64_t miss_total = miss_f + miss_s;
        if (miss_total == rows.size() || lo == hi)
            return; // no threshold candidates

        const int nbins = cfg_.nbins_numeric;
        const double width = (hi - lo) / static_cast<double>(nbins);
        ++epoch_;
        touched_.clear();
        std::uint64_t total_f = 0, total_s = 0;
        for (std::uint32_t r : rows) {
            if (col.missing[r]) continue;
            std::size_t l = ds_->labels[r] == Outcome::Failed ? 0 : 1;
            (l == 0 ? total_f : total_s) += 1;
            std::int32_t idx = bin_index(col.num[r], lo, width, nbins);
            touch(idx);
            counts_[static_cast<std::size_t>(idx)][l] += 1;
        }
        std::sort(touched_.begin(), touched_.end());

        std::uint64_t left_f = 0, left_s = 0;
        for (std::size_t k = 0; k + 1 < touched_.size(); ++k) {
            auto bin = static_cast<std::size_t>(touched_[k]);
            left_f += counts_[bin][0];
            left_s += counts_[bin][1];
            double threshold = lo + width * static_cast<double>(touched_[k] + 1);
            consider_numeric(feature, threshold, left_f, left_s, total_f - left_f,
                             total_s - left_s, miss_f, miss_s);
        }
    }

    void eval_categorical(const Column& col, std::int32_t feature,
                          std::span<const std::uint32_t> rows) {
        std::uint64_t miss_f = 0, miss_s = 0;
        ++epoch_;
        touched_.clear();
        std::uint64_t total_f = 0, total_s = 0;
        for (std::uint32_t r : rows) {
            if (col.missing[r]) {
                (ds_->labels[r] == Outcome::Failed ? miss_f : miss_s) += 1;
                continue;
            }
            std::size_t l = ds_->labels[r] == Outcome::Failed ? 0 : 1;
            (l == 0 ? total_f : total_s) += 1;
            std::int32_t id = col.cat[r];
            touch(id);
            counts_[static_cast<std::size_t>(id)][l] += 1;
        }
        if (touched_.size() < 2)
            return;
        std::sort(touched_.begin(), touched_.end());

        groups_.clear();
        for (std::int32_t id : touched_) {
            auto s = static_cast<std::size_t>(id);
            groups_.push_back({{id}, counts_[s][0], counts_[s][1]});
        }
        if (static_cast<int>(groups_.size()) > cfg_.nbins_categorical)
            merge_overflow();
        std::sort(groups_.begin(), groups_.end(), [](const CategoryGroup& a, const CategoryGroup& b) {
            double ra = a.failure_rate(), rb = b.failure_rate();
            if (ra != rb) return ra < rb;
            return a.min_id() < b.min_id();
        });

        std::uint64_t left_f = 0, left_s = 0;
        for (std::size_t j = 0; j + 1 < groups_.size(); ++j) {
            left_f += groups_[j].n_failed;
            left_s += groups_[j].n_succeeded;
            consider_categorical(feature, j, left_f, left_s, total_f - left_f, total_s - left_s,
                                 miss_f, miss_s);
        }
    }

    void merge_overflow() {
        std::stable_sort(groups_.begin(), groups_.end(), [](const auto& a, const auto& b) {
            std::uint64_t ta = a.n_failed + a.n_succeeded, tb = b.n_failed + b.n_succeeded;
            if (ta != tb) return ta > tb;
            return a.min_id() < b.min_id();
        });
        CategoryGroup overflow;
        auto keep = static_cast<std::size_t>(cfg_.nbins_categorical) - 1;
        for (std::size_t i = keep; i < groups_.size(); ++i) {
            overflow.ids.insert(overflow.ids.end(), groups_[i].ids.begin(), groups_[i].ids.end());
            overflow.n_failed += groups_[i].n_failed;
            overflow.n_succeeded += groups_[i].n_succeeded;
        }
        groups_.resize(keep);
        std::sort(overflow.ids.begin(), overflow.ids.end());
        groups_.push_back(std::move(overflow));
    }

    double child_score(std::uint64_t lf, std::uint64_t ls, std::uint64_t rf, std::uint64_t rs) {
        double nl = static_cast<double>(lf + ls);
        double nr = static_cast<double>(rf + rs);
        double weighted = (nl * gini_counts(lf, ls) + nr * gini_counts(rf, rs)) /
                          static_cast<double>(node_total_);
        return parent_gini_ - weighted;
    }

    // Tie order: higher gain, then feature name, then lower threshold /
    // smaller subset, then missing routed left.
    void consider_numeric(std::int32_t feature, double threshold, std::uint64_t lf,
                          std::uint64_t ls, std::uint64_t rf, std::uint64_t rs,
                          std::uint64_t miss_f, std::uint64_t miss_s) {
        const bool has_missing = (miss_f + miss_s) > 0;
        for (int side = 0; side < (has_missing ? 2 : 1); ++side) {
            bool missing_left = side == 0;
            std::uint64_t LF = lf + (missing_left ? miss_f : 0);
            std::uint64_t LS = ls + (missing_left ? miss_s : 0);
            std::uint64_t RF = rf + (missing_left ? 0 : miss_f);
            std::uint64_t RS = rs + (missing_left ? 0 : miss_s);
            auto min_rows = static_cast<std::uint64_t>(cfg_.min_rows_per_leaf);
            if (LF + LS < min_rows || RF + RS < min_rows)
                continue;
            double gain = child_score(LF, LS, RF, RS);
            if (!accept_common(gain, feature))
                continue;
            // Same feature, equal gain: prefer the lower threshold, then Left.
            if (best_valid_ && gain == best_.gain &&
                best_.split.feature == feature) {
                if (threshold > best_.split.threshold)
                    continue;
                if (threshold == best_.split.threshold && !missing_left)
                    continue;
            }
            best_valid_ = true;
            best_.gain = gain;
            best_.split = Split{feature, SplitKind::NumericThreshold, threshold, {}, missing_left};
        }
    }

    void consider_categorical(std::int32_t feature, std::size_t prefix_len, std::uint64_t lf,
                              std::uint64_t ls, std::uint64_t rf, std::uint64_t rs,
                              std::uint64_t miss_f, std::uint64_t miss_s) {
        const bool has_missing = (miss_f + miss_s) > 0;
        for (int side = 0; side < (has_missing ? 2 : 1); ++side) {
            bool missing_left = side == 0;
            std::uint64_t LF = lf + (missing_left ? miss_f : 0);
            std::uint64_t LS = ls + (missing_left ? miss_s : 0);
            std::uint64_t RF = rf + (missing_left ? 0 : miss_f);
            std::uint64_t RS = rs + (missing_left ? 0 : miss_s);
            auto min_rows = static_cast<std::uint64_t>(cfg_.min_rows_per_leaf);
            if (LF + LS < min_rows || RF + RS < min_rows)
                continue;
            double gain = child_score(LF, LS, RF, RS);
            if (!accept_common(gain, feature))
                continue;
            std::vector<std::int32_t> subset;
            for (std::size_t j = 0; j <= prefix_len; ++j)
                subset.insert(subset.end(), groups_[j].ids.begin(), groups_[j].ids.end());
            std::sort(subset.begin(), subset.end());
            if (best_valid_ && gain == best_.gain && best_.split.feature == feature) {
                if (subset.size() > best_.split.subset.size())
                    continue;
                if (subset.size() == best_.split.subset.size()) {
                    if (subset > best_.split.subset)
                        continue;
                    if (subset == best_.split.subset && !missing_left)
                        continue;
                }
            }
            best_valid_ = true;
            best_.gain = gain;
            best_.split =
                Split{feature, SplitKind::CategorySubset, 0.0, std::move(subset), missing_left};
        }
    }

    /// Common gain / cross-feature acceptance. Returns true when the
    /// candidate should proceed to the same-feature tie-breaks.
    bool accept_common(double gain, std::int32_t feature) const {
        if (!best_valid_) return true;
        if (gain != best_.gain) return gain > best_.gain;
        int r = name_rank_[static_cast<std::size_t>(feature)];
        int rb = name_rank_[static_cast<std::size_t>(best_.split.feature)];
        return r <= rb;
    }

    const Dataset* ds_;
    ForestConfig cfg_;
    std::vector<int> name_rank_;
    std::vector<std::array<std::uint64_t, 2>> counts_;
    std::vector<std::uint32_t> stamp_;
    std::vector<std::int32_t> touched_;
    std::vector<CategoryGroup> groups_;
    std::uint32_t epoch_ = 0;
    std::uint64_t node_total_ = 0;
    double parent_gini_ = 0.0;
    bool best_valid_ = false;
    SplitCandidate best_;
};

} // namespace detail

/// Best split over the candidate features, or nullopt when no candidate has
/// positive gain (or the node is pure).
inline std::optional<SplitCandidate> best_split(const Dataset& ds,
                                                const std::vector<std::uint32_t>& rows,
                                                const std::vector<std::int32_t>& candidate_features,
                                                const ForestConfig& cfg) {
    std::uint64_t nf = 0, ns = 0;
    for (std::uint32_t r : rows)
        (ds.labels[r] == Outcome::Failed ? nf : ns) += 1;
    detail::SplitFinder finder(ds, cfg);
    return finder.find(rows, candidate_features, nf, ns);
}

// ---------------------------------------------------------------------------
// Tree construction.

namespace detail {

inline bool row_goes_left(const Dataset& ds, const Split& split, std::uint32_t row) {
    const Column& col = ds.columns[static_cast<std::size_t>(split.feature)];
    if (col.missing[row])
        return split.missing_left;
    if (split.kind == SplitKind::NumericThreshold)
        return col.num[row] < split.threshold;
    return std::binary_search(split.subset.begin(), split.subset.end(), col.cat[row]);
}

class TreeBuilder {
public:
    TreeBuilder(const Dataset& ds, const ForestConfig& cfg)
        : ds_(&ds), cfg_(cfg), finder_(ds, cfg) {
        all_features_.resize(ds.columns.size());
        std::iota(all_features_.begin(), all_features_.end(), 0);
        scratch_features_ = all_features_;
    }

    Tree build(const std::vector<std::uint32_t>& base_rows, Rng& rng) {
        Tree tree;
        rows_.clear();
        if (cfg_.bootstrap) {
            auto m = static_cast<std::size_t>(cfg_.row_sample_rate *
                                              static_cast<double>(base_rows.size()) + 1e-9);
            if (m == 0) m = 1;
            rows_.reserve(m);
            for (std::size_t i = 0; i < m; ++i)
                rows_.push_back(base_rows[rng.bounded(base_rows.size())]);
        } else {
            rows_ = base_rows;
        }
        tree.nodes.reserve(64);
        build_node(tree, 0, rows_.size(), 0, rng);
        return tree;
    }

private:
    std::int32_t build_node(Tree& tree, std::size_t begin, std::size_t end, int depth, Rng& rng) {
        std::uint64_t nf = 0, ns = 0;
        for (std::size_t i = begin; i < end; ++i)
            (ds_->labels[rows_[i]] == Outcome::Failed ? nf : ns) += 1;

        auto index = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.push_back({});
        tree.nodes[static_cast<std::size_t>(index)].n_failed = nf;
        tree.nodes[static_cast<std::size_t>(index)].n_succeeded = ns;

        if (depth >= cfg_.max_depth || nf == 0 || ns == 0 ||
            end - begin < 2 * static_cast<std::size_t>(cfg_.min_rows_per_leaf))
            return index;

        const std::vector<std::int32_t>& candidates = sample_features(rng);
        std::optional<SplitCandidate> cand =
            finder_.find(std::span(rows_.data() + begin, end - begin), candidates, nf, ns);
        if (!cand)
            return index;

        // Stable in-place partition through the scratch buffers.
        left_tmp_.clear();
        right_tmp_.clear();
        for (std::size_t i = begin; i < end; ++i) {
            std::uint32_t r = rows_[i];
            (row_goes_left(*ds_, cand->split, r) ? left_tmp_ : right_tmp_).push_back(r);
        }
        if (left_tmp_.empty() || right_tmp_.empty())
            return index; // floating-point boundary guard; keep as leaf
        std::copy(left_tmp_.begin(), left_tmp_.end(), rows_.begin() + static_cast<std::ptrdiff_t>(begin));
        std::copy(right_tmp_.begin(), right_tmp_.end(),
                  rows_.begin() + static_cast<std::ptrdiff_t>(begin + left_tmp_.size()));
        const std::size_t mid = begin + left_tmp_.size();

        tree.nodes[static_cast<std::size_t>(index)].split = cand->split;
        tree.nodes[static_cast<std::size_t>(index)].gain = cand->gain;
        std::int32_t left = build_node(tree, begin, mid, depth + 1, rng);
        tree.nodes[static_cast<std::size_t>(index)].left = left;
        std::int32_t right = build_node(tree, mid, end, depth + 1, rng);
        tree.nodes[static_cast<std::size_t>(index)].right = right;
        return index;
    }

    const std::vector<std::int32_t>& sample_features(Rng& rng) {
        auto f = all_features_.size();
        auto m = static_cast<std::size_t>(cfg_.mtries);
        if (m >= f)
            return all_features_;
        scratch_features_ = all_features_;
        for (std::size_t i = 0; i < m; ++i) {
            std::size_t j = i + static_cast<std::size_t>(rng.bounded(f - i));
            std::swap(scratch_features_[i], scratch_features_[j]);
        }
        sampled_.assign(scratch_features_.begin(),
                        scratch_features_.begin() + static_cast<std::ptrdiff_t>(m));
        return sampled_;
    }

    const Dataset* ds_;
    ForestConfig cfg_;
    SplitFinder finder_;
    std::vector<std::int32_t> all_features_;
    std::vector<std::int32_t> scratch_features_;
    std::vector<std::int32_t> sampled_;
    std::vector<std::uint32_t> rows_;
    std::vector<std::uint32_t> left_tmp_;
    std::vector<std::uint32_t> right_tmp_;
};

} // namespace detail

/// Grow one tree: bootstrap sample (unless disabled), recursive best splits
/// until depth, purity, or no positive gain; leaves keep the class counts of
/// the bootstrap rows that reached them.
inline Tree build_tree(const Dataset& ds, const std::vector<std::uint32_t>& base_rows,
                       const ForestConfig& cfg, Rng& tree_rng) {
    if (base_rows.empty())
        throw ContractError("build_tree: no rows");
    detail::TreeBuilder builder(ds, cfg);
    return builder.build(base_rows, tree_rng);
}

// ---------------------------------------------------------------------------
// Forest training, prediction, cross-validation, importance.

inline Forest train(const Dataset& ds, const ForestConfig& cfg,
                    const std::vector<std::uint32_t>& rows, int threads = 1) {
    cfg.validate();
    if (rows.size() < 2)
        throw Error("train: need at least 2 rows");
    if (ds.columns.empty())
        throw Error("train: dataset has no features");
    if (static_cast<std::size_t>(cfg.mtries) > ds.columns.size())
        throw Error("train: mtries " + std::to_string(cfg.mtries) + " exceeds feature count " +
                    std::to_string(ds.columns.size()));
    std::uint64_t nf = 0, ns = 0;
    for (std::uint32_t r : rows)
        (ds.labels[r] == Outcome::Failed ? nf : ns) += 1;
    if (nf == 0 || ns == 0)
        throw Error("train: training data contains a single class");

    Forest forest;
    forest.config = cfg;
    forest.fingerprint = ds.fingerprint();
    forest.schema.reserve(ds.columns.size());
    for (const Column& c : ds.columns)
        forest.schema.push_back({c.spec.name, c.spec.kind, c.categories});
    forest.trees.resize(static_cast<std::size_t>(cfg.n_trees));

    // Tree i depends only on (data, seed, i): any thread count yields the
    // identical forest.
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        detail::TreeBuilder builder(ds, cfg);
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= forest.trees.size())
                break;
            Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
            forest.trees[i] = builder.build(rows, rng);
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t)
            pool.emplace_back(worker);
        for (std::thread& t : pool)
            t.join();
    }
    return forest;
}

inline Forest train(const Dataset& ds, const ForestConfig& cfg, int threads = 1) {
    return train(ds, cfg, ds.all_rows(), threads);
}

struct Prediction {
    double p_failed = 0.0;
    double p_succeeded = 0.0;
    Outcome hard = Outcome::Failed;
};

/// Average of per-tree leaf class frequencies; hard label is the argmax with
/// ties going to Failed.
inline Prediction predict(const Forest& forest, const Dataset& ds, std::uint32_t row) {
    if (forest.fingerprint != ds.fingerprint())
        throw Error("predict: dataset schema does not match the model fingerprint");
    if (forest.trees.empty())
        throw Error("predict: forest has no trees");
    double sum_f = 0.0, sum_s = 0.0;
    for (const Tree& tree : forest.trees) {
        std::int32_t at = 0;
        while (!tree.nodes[static_cast<std::size_t>(at)].is_leaf()) {
            const TreeNode& node = tree.nodes[static_cast<std::size_t>(at)];
            at = detail::row_goes_left(ds, node.split, row) ? node.left : node.right;
        }
        const TreeNode& leaf = tree.nodes[static_cast<std::size_t>(at)];
        auto total = static_cast<double>(leaf.n_failed + leaf.n_succeeded);
        sum_f += static_cast<double>(leaf.n_failed) / total;
        sum_s += static_cast<double>(leaf.n_succeeded) / total;
    }
    auto t = static_cast<double>(forest.trees.size());
    Prediction p;
    p.p_failed = sum_f / t;
    p.p_succeeded = sum_s / t;
    p.hard = p.p_failed >= p.p_succeeded ? Outcome::Failed : Outcome::Succeeded;
    return p;
}

struct FoldResult {
    int fold = 0;
    ConfusionMatrix cm;
    ClassMetrics metrics;
};

struct CVReport {
    std::vector<ScoredLabel> pooled; // one holdout prediction per dataset row
    ConfusionMatrix cm;
    ClassMetrics metrics;
    std::vector<FoldResult> folds;
};

/// k-fold cross-validation over the dataset's fold assignment: train on the
/// complement of each fold, predict the fold, pool the holdout predictions.
inline CVReport cross_validate(const Dataset& ds, const ForestConfig& cfg, int threads = 1) {
    cfg.validate();
    const int k = cfg.folds;
    if (k < 2)
        throw ContractError("cross_validate: folds must be >= 2");
    for (std::size_t i = 0; i < ds.n_rows(); ++i)
        if (ds.fold[i] < 0 || ds.fold[i] >= k)
            throw Error("cross_validate: row fold " + std::to_string(ds.fold[i]) +
                        " outside [0," + std::to_string(k) + ")");

    CVReport report;
    report.pooled.assign(ds.n_rows(), {});
    for (int f = 0; f < k; ++f) {
        std::vector<std::uint32_t> train_rows, val_rows;
        for (std::size_t i = 0; i < ds.n_rows(); ++i)
            (ds.fold[i] == f ? val_rows : train_rows).push_back(static_cast<std::uint32_t>(i));
        if (val_rows.empty())
            throw Error("cross_validate: fold " + std::to_string(f) + " is empty");
        std::uint64_t nf = 0, ns = 0;
        for (std::uint32_t r : train_rows)
            (ds.labels[r] == Outcome::Failed ? nf : ns) += 1;
        if (nf == 0 || ns == 0)
            throw Error("cross_validate: fold " + std::to_string(f) +
                        " training complement contains a single class");

        ForestConfig fold_cfg = cfg;
        fold_cfg.seed = mix_seed(cfg.seed, 0xCF00ULL + static_cast<std::uint64_t>(f));
        Forest forest = train(ds, fold_cfg, train_rows, threads);

        std::vector<ScoredLabel> fold_scores;
        fold_scores.reserve(val_rows.size());
        for (std::uint32_t r : val_rows) {
            double p = predict(forest, ds, r).p_failed;
            report.pooled[r] = {p, ds.labels[r]};
            fold_scores.push_back({p, ds.labels[r]});
        }
        ConfusionMatrix cm = confusion_matrix(fold_scores);
        report.folds.push_back({f, cm, class_metrics(cm)});
    }
    report.cm = confusion_matrix(report.pooled);
    report.metrics = class_metrics(report.cm);
    return report;
}

/// Impurity-gain importance: relative(f) sums node_rows * gain over every
/// internal node splitting on f; scaled divides by the maximum, percentage by
/// the total. Sorted descending; empty when the forest never split.
inline std::vector<ImportanceEntry> variable_importance(const Forest& forest) {
    std::vector<double> relative(forest.schema.size(), 0.0);
    bool any_split = false;
    for (const Tree& tree : forest.trees) {
        for (const TreeNode& node : tree.nodes) {
            if (node.is_leaf())
                continue;
            any_split = true;
            relative[static_cast<std::size_t>(node.split.feature)] +=
                static_cast<double>(node.n_failed + node.n_succeeded) * node.gain;
        }
    }
    if (!any_split)
        return {};
    double max_rel = *std::max_element(relative.begin(), relative.end());
    double total = 0.0;
    for (double r : relative)
        total += r;
    std::vector<ImportanceEntry> entries;
    entries.reserve(relative.size());
    for (std::size_t i = 0; i < relative.size(); ++i)
        entries.push_back({forest.schema[i].name, relative[i], relative[i] / max_rel,
                           relative[i] / total});
    std::sort(entries.begin(), entries.end(), [](const ImportanceEntry& a, const ImportanceEntry& b) {
        if (a.relative != b.relative)
            return a.relative > b.relative;
        return a.feature < b.feature;
    });
    return entries;
}

// ---------------------------------------------------------------------------
// Model store: versioned line-oriented text, byte-stable for fixed inputs.

inline constexpr const char* kModelHeader = "taskseer-forest v1";

namespace detail {

inline void write_node(std::ostream& out, const Tree& tree, std::int32_t index) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(index)];
    if (node.is_leaf()) {
        out << "l " << node.n_failed << ' ' << node.n_succeeded << '\n';
        return;
    }
    if (node.split.kind == SplitKind::NumericThreshold) {
        out << "n " << node.split.feature << ' ' << format_double(node.split.threshold) << ' '
            << (node.split.missing_left ? 'L' : 'R') << ' ' << format_double(node.gain) << ' '
            << node.n_failed << ' ' << node.n_succeeded << '\n';
    } else {
        out << "c " << node.split.feature << ' ' << (node.split.missing_left ? 'L' : 'R') << ' '
            << format_double(node.gain) << ' ' << node.n_failed << ' ' << node.n_succeeded << ' '
            << node.split.subset.size();
        for (std::int32_t id : node.split.subset)
            out << ' ' << id;
        out << '\n';
    }
    write_node(out, tree, node.left);
    write_node(out, tree, node.right);
}

class ModelReader {
public:
    explicit ModelReader(std::istream& in) : in_(in) {}

    std::string line() {
        std::string s;
        if (!std::getline(in_, s))
            throw ParseError("model file: unexpected end of file");
        return s;
    }

    std::int32_t read_tree_nodes(Tree& tree, const Forest& forest) {
        std::string s = line();
        std::istringstream ls(s);
        std::string tag;
        ls >> tag;
        auto index = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.push_back({});
        if (tag == "l") {
            TreeNode node;
            if (!(ls >> node.n_failed >> node.n_succeeded))
                throw ParseError("model file: bad leaf line: " + s);
            tree.nodes[static_cast<std::size_t>(index)] = node;
            return index;
        }
        TreeNode node;
        char miss = 'L';
        std::string gain_text;
        if (tag == "n") {
            std::string thr_text;
            if (!(ls >> node.split.feature >> thr_text >> miss >> gain_text >> node.n_failed >>
                  node.n_succeeded))
                throw ParseError("model file: bad numeric node line: " + s);
            node.split.kind = SplitKind::NumericThreshold;
            node.split.threshold = parse_double(thr_text);
        } else if (tag == "c") {
            std::size_t count = 0;
            if (!(ls >> node.split.feature >> miss >> gain_text >> node.n_failed >>
                  node.n_succeeded >> count))
                throw ParseError("model file: bad categorical node line: " + s);
            node.split.kind = SplitKind::CategorySubset;
            node.split.subset.resize(count);
            for (std::size_t i = 0; i < count; ++i)
                if (!(ls >> node.split.subset[i]))
                    throw ParseError("model file: truncated category subset: " + s);
        } else {
            throw ParseError("model file: unknown node tag '" + tag + "'");
        }
        node.gain = parse_double(gain_text);
        node.split.missing_left = miss == 'L';
        if (miss != 'L' && miss != 'R')
            throw ParseError("model file: bad missing side in: " + s);
        if (node.split.feature < 0 ||
            static_cast<std::size_t>(node.split.feature) >= forest.schema.size())
            throw ParseError("model file: feature index out of range in: " + s);
        const bool numeric = forest.schema[static_cast<std::size_t>(node.split.feature)].kind ==
                             FeatureKind::Numeric;
        if (numeric != (node.split.kind == SplitKind::NumericThreshold))
            throw ParseError("model file: split kind does not match schema in: " + s);
        tree.nodes[static_cast<std::size_t>(index)] = std::move(node);
        std::int32_t left = read_tree_nodes(tree, forest);
        tree.nodes[static_cast<std::size_t>(index)].left = left;
        std::int32_t right = read_tree_nodes(tree, forest);
        tree.nodes[static_cast<std::size_t>(index)].right = right;
        return index;
    }

private:
    std::istream& in_;
};

} // namespace detail

inline void save_model(const Forest& forest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    out << kModelHeader << '\n';
    out << "fingerprint " << fingerprint_hex(forest.fingerprint) << '\n';

    nlohmann::json cfg;
    cfg["n_trees"] = forest.config.n_trees;
    cfg["max_depth"] = forest.config.max_depth;
    cfg["mtries"] = forest.config.mtries;
    cfg["nbins_numeric"] = forest.config.nbins_numeric;
    cfg["nbins_categorical"] = forest.config.nbins_categorical;
    cfg["min_rows_per_leaf"] = forest.config.min_rows_per_leaf;
    cfg["seed"] = forest.config.seed;
    cfg["folds"] = forest.config.folds;
    cfg["row_sample_rate"] = forest.config.row_sample_rate;
    cfg["bootstrap"] = forest.config.bootstrap;
    out << "config " << cfg.dump() << '\n';

    nlohmann::json schema = nlohmann::json::array();
    for (const ForestSchemaColumn& c : forest.schema) {
        nlohmann::json f;
        f["name"] = c.name;
        f["kind"] = to_string(c.kind);
        if (c.kind != FeatureKind::Numeric)
            f["categories"] = c.categories;
        schema.push_back(std::move(f));
    }
    out << "schema " << schema.dump() << '\n';

    out << "trees " << forest.trees.size() << '\n';
    for (std::size_t i = 0; i < forest.trees.size(); ++i) {
        out << "tree " << i << '\n';
        detail::write_node(out, forest.trees[i], 0);
        out << "endtree\n";
    }
    out << "end\n";
    if (!out)
        throw Error("model store: write failure");
}

inline Forest load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open model file " + path.string());
    detail::ModelReader reader(in);

    if (reader.line() != kModelHeader)
        throw Error("not a supported taskseer model file: " + path.string());

    Forest forest;
    {
        std::istringstream ls(reader.line());
        std::string tag, hex;
        ls >> tag >> hex;
        if (tag != "fingerprint" || hex.size() != 16)
            throw ParseError("model file: bad fingerprint line");
        try {
            forest.fingerprint = std::stoull(hex, nullptr, 16);
        } catch (const std::exception&) {
            throw ParseError("model file: bad fingerprint value " + hex);
        }
    }
    {
        std::string s = reader.line();
        if (s.rfind("config ", 0) != 0)
            throw ParseError("model file: missing config line");
        nlohmann::json cfg;
        try {
            cfg = nlohmann::json::parse(s.substr(7));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("model file: bad config json: ") + e.what());
        }
        forest.config.n_trees = cfg.at("n_trees").get<int>();
        forest.config.max_depth = cfg.at("max_depth").get<int>();
        forest.config.mtries = cfg.at("mtries").get<int>();
        forest.config.nbins_numeric = cfg.at("nbins_numeric").get<int>();
        forest.config.nbins_categorical = cfg.at("nbins_categorical").get<int>();
        forest.config.min_rows_per_leaf = cfg.at("min_rows_per_leaf").get<int>();
        forest.config.seed = cfg.at("seed").get<std::uint64_t>();
        forest.config.folds = cfg.at("folds").get<int>();
        forest.config.row_sample_rate = cfg.at("row_sample_rate").get<double>();
        forest.config.bootstrap = cfg.at("bootstrap").get<bool>();
    }
    {
        std::string s = reader.line();
        if (s.rfind("schema ", 0) != 0)
            throw ParseError("model file: missing schema line");
        nlohmann::json schema;
        try {
            schema = nlohmann::json::parse(s.substr(7));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("model file: bad schema json: ") + e.what());
        }
        for (const auto& f : schema) {
            ForestSchemaColumn c;
            c.name = f.at("name").get<std::string>();
            c.kind = feature_kind_from_string(f.at("kind").get<std::string>());
            if (f.contains("categories"))
                c.categories = f.at("categories").get<std::vector<std::string>>();
            if (c.kind == FeatureKind::Boolean && c.categories.empty())
                c.categories = {"false", "true"};
            forest.schema.push_back(std::move(c));
        }
    }
    detail::SchemaHasher hasher;
    for (const ForestSchemaColumn& c : forest.schema)
        hasher.column(c.name, c.kind, c.categories);
    if (hasher.value() != forest.fingerprint)
        throw Error("model file: schema does not match the stored fingerprint");

    {
        std::istringstream ls(reader.line());
        std::string tag;
        std::size_t count = 0;
        ls >> tag >> count;
        if (tag != "trees")
            throw ParseError("model file: missing trees line");
        forest.trees.resize(count);
    }
    for (std::size_t i = 0; i < forest.trees.size(); ++i) {
        std::istringstream ls(reader.line());
        std::string tag;
        std::size_t index = 0;
        ls >> tag >> index;
        if (tag != "tree" || index != i)
            throw ParseError("model file: expected tree " + std::to_string(i));
        reader.read_tree_nodes(forest.trees[i], forest);
        if (reader.line() != "endtree")
            throw ParseError("model file: missing endtree after tree " + std::to_string(i));
    }
    if (reader.line() != "end")
        throw ParseError("model file: missing end marker");
    return forest;
}

} // namespace taskseer
