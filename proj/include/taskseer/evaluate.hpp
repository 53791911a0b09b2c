// Copyright (c) 2026 taskseer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Classification metrics for the failure predictor: confusion matrix,
// per-class precision/recall/error, ROC with trapezoidal AUC, and the
// metrics.json / roc.csv / importance.csv emitters.
//
// The positive class is Failed throughout.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "taskseer/categorize.hpp"
#include "taskseer/text.hpp"

namespace taskseer {

struct ScoredLabel {
    double p_failed = 0.0;
    Outcome label = Outcome::Succeeded; // Failed or Succeeded
};

struct ConfusionMatrix {
    std::uint64_t tp = 0; // predicted Failed, was Failed
    std::uint64_t fp = 0; // predicted Failed, was Succeeded
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    std::uint64_t n() const { return tp + fp + tn + fn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

/// Threshold the scores: predicted Failed iff p_failed >= threshold.
inline ConfusionMatrix confusion_matrix(const std::vector<ScoredLabel>& predictions,
                                        double threshold = 0.5) {
    if (predictions.empty())
        throw Error("confusion_matrix: no predictions");
    ConfusionMatrix cm;
    for (const ScoredLabel& p : predictions) {
        bool predicted_failed = p.p_failed >= threshold;
        bool was_failed = p.label == Outcome::Failed;
        if (predicted_failed)
            (was_failed ? cm.tp : cm.fp) += 1;
        else
            (was_failed ? cm.fn : cm.tn) += 1;
    }
    return cm;
}

/// Per-class rates. A zero denominator yields an unset optional, never 0.
struct ClassMetrics {
    std::optional<double> precision_failed;
    std::optional<double> recall_failed;
    std::optional<double> error_failed; // fn / (tp + fn)
    std::optional<double> precision_succeeded;
    std::optional<double> recall_succeeded;
    std::optional<double> error_succeeded; // fp / (tn + fp)
    std::optional<double> total_error;
};

inline ClassMetrics class_metrics(const ConfusionMatrix& cm) {
    auto rate = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
        if (den == 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    };
    ClassMetrics m;
    m.precision_failed = rate(cm.tp, cm.tp + cm.fp);
    m.recall_failed = rate(cm.tp, cm.tp + cm.fn);
    m.error_failed = rate(cm.fn, cm.tp + cm.fn);
    m.precision_succeeded = rate(cm.tn, cm.tn + cm.fn);
    m.recall_succeeded = rate(cm.tn, cm.tn + cm.fp);
    m.error_succeeded = rate(cm.fp, cm.tn + cm.fp);
    m.total_error = rate(cm.fp + cm.fn, cm.n());
    return m;
}

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points; // fpr nondecreasing, (0,0) .. (1,1)
    double auc = 0.0;
};

/// Threshold sweep over the distinct scores, tied scores grouped into one
/// step, AUC by trapezoid. The leading (0,0) point carries +infinity as its
/// threshold (predict nothing Failed).
inline RocCurve roc_curve(const std::vector<ScoredLabel>& predictions) {
    std::uint64_t pos = 0, neg = 0;
    for (const ScoredLabel& p : predictions)
        (p.label == Outcome::Failed ? pos : neg) += 1;
    if (pos == 0 || neg == 0)
        throw Error("roc_curve: both classes must be present");

    std::vector<const ScoredLabel*> sorted;
    sorted.reserve(predictions.size());
    for (const ScoredLabel& p : predictions)
        sorted.push_back(&p);
    std::sort(sorted.begin(), sorted.end(), [](const ScoredLabel* a, const ScoredLabel* b) {
        return a->p_failed > b->p_failed;
    });

    RocCurve roc;
    roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::uint64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        double score = sorted[i]->p_failed;
        while (i < sorted.size() && sorted[i]->p_failed == score) {
            (sorted[i]->label == Outcome::Failed ? tp : fp) += 1;
            ++i;
        }
        roc.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                              static_cast<double>(tp) / static_cast<double>(pos), score});
    }
    double auc = 0.0;
    for (std::size_t k = 1; k < roc.points.size(); ++k) {
        const RocPoint& a = roc.points[k - 1];
        const RocPoint& b = roc.points[k];
        auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
    }
    roc.auc = auc;
    return roc;
}

// ---------------------------------------------------------------------------
// Report emitters. Column sets and ordering are fixed so outputs diff cleanly
// and byte-identical runs stay byte-identical.

inline nlohmann::json metrics_to_json(const ConfusionMatrix& cm, const ClassMetrics& m,
                                      double threshold,
                                      std::optional<double> auc = std::nullopt) {
    auto opt = [](const std::optional<double>& v) {
        return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    nlohmann::json j;
    j["confusion"] = {{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}};
    j["n"] = cm.n();
    j["threshold"] = threshold;
    j["precision_failed"] = opt(m.precision_failed);
    j["recall_failed"] = opt(m.recall_failed);
    j["error_failed"] = opt(m.error_failed);
    j["precision_succeeded"] = opt(m.precision_succeeded);
    j["recall_succeeded"] = opt(m.recall_succeeded);
    j["error_succeeded"] = opt(m.error_succeeded);
    j["total_error"] = opt(m.total_error);
    if (auc)
        j["auc"] = *auc;
    return j;
}

inline void write_metrics_json(const nlohmann::json& metrics, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    out << metrics.dump(2) << '\n';
}

inline void write_roc_csv(const RocCurve& roc, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    out << "fpr,tpr,threshold\n";
    for (const RocPoint& p : roc.points)
        out << format_double(p.fpr) << ',' << format_double(p.tpr) << ','
            << format_double(p.threshold) << '\n';
}

struct ImportanceEntry {
    std::string feature;
    double relative = 0.0;
    double scaled = 0.0;
    double percentage = 0.0;
};

inline void write_importance_csv(const std::vector<ImportanceEntry>& entries,
                                 const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    out << "feature,relative,scaled,percentage\n";
    for (const ImportanceEntry& e : entries)
        out << csv_quote(e.feature) << ',' << format_double(e.relative) << ','
            << format_double(e.scaled) << ',' << format_double(e.percentage) << '\n';
}

} // namespace taskseer
