#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "frustra/error.hpp"
#include "frustra/features.hpp"
#include "frustra/models_sequence.hpp"
#include "frustra/models_tabular.hpp"
#include "frustra/parallel.hpp"
#include "frustra/random.hpp"
#include "frustra/text.hpp"

namespace frustra {

inline constexpr double decision_threshold = 0.5;

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct AverageMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricsReport {
    std::array<ClassMetrics, 2> per_class{};
    double accuracy = 0.0;
    AverageMetrics macro;
    AverageMetrics weighted;
    /// F1 of the frustrated class; the headline "F1" of the reports.
    double positive_f1 = 0.0;
    double macro_f1 = 0.0;
    std::optional<double> roc_auc;
    std::size_t count = 0;
    /// Set when a precision/recall denominator was zero and the value reported as 0.
    std::vector<std::string> warnings;
};

inline MetricsReport classification_report(std::span<const int> labels, std::span<const int> predictions) {
    if (labels.size() != predictions.size()) throw DomainError("labels and predictions differ in length");
    if (labels.empty()) throw DomainError("classification report of an empty set");
    std::array<std::array<std::size_t, 2>, 2> confusion{};  // [truth][prediction]
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if ((labels[i] != 0 && labels[i] != 1) || (predictions[i] != 0 && predictions[i] != 1)) {
            throw DomainError("labels and predictions must be 0 or 1");
        }
        ++confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])];
    }
    MetricsReport r;
    r.count = labels.size();
    const auto n = static_cast<double>(r.count);
    for (std::size_t c = 0; c < 2; ++c) {
        const auto tp = static_cast<double>(confusion[c][c]);
        const auto fp = static_cast<double>(confusion[1 - c][c]);
        const auto fn = static_cast<double>(confusion[c][1 - c]);
        auto& m = r.per_class[c];
        m.support = confusion[c][0] + confusion[c][1];
        if (tp + fp > 0) {
            m.precision = tp / (tp + fp);
        } else {
            r.warnings.push_back("precision of class " + std::to_string(c) + " undefined (no predictions); set to 0");
        }
        if (tp + fn > 0) {
            m.recall = tp / (tp + fn);
        } else {
            r.warnings.push_back("recall of class " + std::to_string(c) + " undefined (no support); set to 0");
        }
        m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        r.macro.precision += m.precision / 2.0;
        r.macro.recall += m.recall / 2.0;
        r.macro.f1 += m.f1 / 2.0;
        const double w = static_cast<double>(m.support) / n;
        r.weighted.precision += w * m.precision;
        r.weighted.recall += w * m.recall;
        r.weighted.f1 += w * m.f1;
    }
    r.accuracy = static_cast<double>(confusion[0][0] + confusion[1][1]) / n;
    r.positive_f1 = r.per_class[1].f1;
    r.macro_f1 = r.macro.f1;
    return r;
}

/// Normalized Mann-Whitney U with ties counted one half.
inline double roc_auc(std::span<const int> labels, std::span<const double> scores) {
    if (labels.size() != scores.size()) throw DomainError("labels and scores differ in length");
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double positives = 0.0;
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                positives += 1.0;
                rank_sum += avg_rank;
            }
        }
        i = j;
    }
    const double negatives = static_cast<double>(labels.size()) - positives;
    if (positives == 0.0 || negatives == 0.0) throw DomainError("ROC AUC needs both classes present");
    return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

struct RocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

/// One point per distinct score (predict positive when score >= threshold),
/// from the highest threshold down, preceded by (inf, 0, 0).
inline std::vector<RocPoint> roc_curve(std::span<const int> labels, std::span<const double> scores) {
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    const auto neg = static_cast<double>(labels.size()) - pos;
    if (pos == 0.0 || neg == 0.0) throw DomainError("ROC curve needs both classes present");
    std::vector<RocPoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    double tp = 0.0;
    double fp = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            (labels[order[i]] == 1 ? tp : fp) += 1.0;
            ++i;
        }
        out.push_back({s, fp / neg, tp / pos});
    }
    return out;
}

inline std::vector<int> threshold_predictions(std::span<const double> scores) {
    std::vector<int> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= decision_threshold ? 1 : 0;
    return out;
}

/// Report at the fixed 0.5 threshold plus ROC AUC when both classes occur.
inline MetricsReport evaluate_scores(std::span<const int> labels, std::span<const double> scores) {
    const auto preds = threshold_predictions(scores);
    auto r = classification_report(labels, preds);
    const auto pos = std::count(labels.begin(), labels.end(), 1);
    if (pos > 0 && static_cast<std::size_t>(pos) < labels.size()) r.roc_auc = roc_auc(labels, scores);
    return r;
}

/// Human-readable table in the usual classification-report layout.
inline void write_report_text(std::ostream& out, const MetricsReport& r, std::string_view title = {}) {
    auto f = [](double v) { return format_fixed(v, 4); };
    if (!title.empty()) out << title << '\n';
    out << "                 Precision  Recall  F1-score  Support\n";
    const char* names[2] = {"Non-frustrated (0)", "Frustrated (1)    "};
    for (std::size_t c = 0; c < 2; ++c) {
        const auto& m = r.per_class[c];
        out << names[c] << "  " << f(m.precision) << "  " << f(m.recall) << "    " << f(m.f1) << "  "
            << m.support << '\n';
    }
    out << "Accuracy                                  " << f(r.accuracy) << "  " << r.count << '\n'
        << "Macro avg           " << f(r.macro.precision) << "  " << f(r.macro.recall) << "    " << f(r.macro.f1)
        << "  " << r.count << '\n'
        << "Weighted avg        " << f(r.weighted.precision) << "  " << f(r.weighted.recall) << "    "
        << f(r.weighted.f1) << "  " << r.count << '\n'
        << "Positive-class F1: " << f(r.positive_f1) << '\n'
        << "ROC-AUC: " << (r.roc_auc ? f(*r.roc_auc) : std::string("n/a")) << '\n';
    for (const auto& w : r.warnings) out << "warning: " << w << '\n';
}

inline void write_report_tsv(std::ostream& out, const MetricsReport& r) {
    auto d = [](double v) { return format_double(v); };
    out << "metric\tvalue\n"
        << "count\t" << r.count << '\n'
        << "accuracy\t" << d(r.accuracy) << '\n'
        << "positive_f1\t" << d(r.positive_f1) << '\n'
        << "macro_f1\t" << d(r.macro_f1) << '\n'
        << "roc_auc\t" << (r.roc_auc ? d(*r.roc_auc) : std::string("nan")) << '\n';
    for (std::size_t c = 0; c < 2; ++c) {
        const auto& m = r.per_class[c];
        const auto p = "class" + std::to_string(c) + "_";
        out << p << "precision\t" << d(m.precision) << '\n'
            << p << "recall\t" << d(m.recall) << '\n'
            << p << "f1\t" << d(m.f1) << '\n'
            << p << "support\t" << m.support << '\n';
    }
    out << "macro_precision\t" << d(r.macro.precision) << '\n'
        << "macro_recall\t" << d(r.macro.recall) << '\n'
        << "weighted_precision\t" << d(r.weighted.precision) << '\n'
        << "weighted_recall\t" << d(r.weighted.recall) << '\n'
        << "weighted_f1\t" << d(r.weighted.f1) << '\n'
        << "warnings\t" << r.warnings.size() << '\n';
}

inline void write_roc_tsv(std::ostream& out, const std::vector<RocPoint>& points) {
    out << "threshold\tfpr\ttpr\n";
    for (const auto& p : points) out << format_double(p.threshold) << '\t' << format_double(p.fpr) << '\t'
                                     << format_double(p.tpr) << '\n';
}

struct EarlyWindowResult {
    std::size_t window = 0;
    MetricsReport metrics;
};

inline const std::vector<std::size_t>& default_windows() {
    static const std::vector<std::size_t> w{5, 10, 15, 20, 30};
    return w;
}

/// Scores every session from its first `window` symbols only, per window.
inline std::vector<EarlyWindowResult> early_window_sweep(const LstmModel& model, std::span<const SymbolSequence> seqs,
                                                         std::span<const int> labels,
                                                         std::span<const std::size_t> windows, unsigned threads = 1) {
    if (seqs.size() != labels.size()) throw DomainError("sequence and label counts differ");
    std::vector<EarlyWindowResult> out(windows.size());
    for (std::size_t k = 0; k < windows.size(); ++k) {
        if (windows[k] == 0) throw DomainError("window must be positive");
        const auto probs = predict_proba_prefix(model, seqs, windows[k], threads);
        out[k] = {windows[k], evaluate_scores(labels, probs)};
    }
    return out;
}

/// Layout: window, F1, AUC, accuracy, then per-class precision/recall/F1.
inline void write_early_window_tsv(std::ostream& out, const std::vector<EarlyWindowResult>& results) {
    out << "window\tpositive_f1\troc_auc\taccuracy\tprecision_0\trecall_0\tf1_0\tprecision_1\trecall_1\tf1_1\n";
    for (const auto& r : results) {
        const auto& m = r.metrics;
        out << r.window << '\t' << format_double(m.positive_f1) << '\t'
            << (m.roc_auc ? format_double(*m.roc_auc) : std::string("nan")) << '\t' << format_double(m.accuracy);
        for (const auto& c : m.per_class) {
            out << '\t' << format_double(c.precision) << '\t' << format_double(c.recall) << '\t' << format_double(c.f1);
        }
        out << '\n';
    }
}

inline void write_early_window_text(std::ostream& out, const std::vector<EarlyWindowResult>& results) {
    auto f = [](double v) { return format_fixed(v, 4); };
    out << "Window            F1      ROC-AUC  Accuracy\n";
    for (const auto& r : results) {
        out << "First " << r.window << " events" << std::string(r.window < 10 ? 4 : 3, ' ') << f(r.metrics.positive_f1)
            << "  " << (r.metrics.roc_auc ? f(*r.metrics.roc_auc) : std::string("  n/a ")) << "   "
            << f(r.metrics.accuracy) << '\n';
    }
    out << "\nWindow  Class  Precision  Recall  F1-score\n";
    for (const auto& r : results) {
        for (std::size_t c = 0; c < 2; ++c) {
            const auto& m = r.metrics.per_class[c];
            out << r.window << (r.window < 10 ? "       " : "      ") << c << "      " << f(m.precision) << "     "
                << f(m.recall) << "  " << f(m.f1) << '\n';
        }
    }
}

inline double accuracy_of(const TabularModel& model, const FeatureMatrix& m) {
    std::size_t correct = 0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const int pred = predict_one(model, m.row(r)) >= decision_threshold ? 1 : 0;
        correct += pred == m.label(r) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(m.rows());
}

/// Mean accuracy drop over `repeats` shuffles of each column. Each (feature,
/// repeat) draws from its own stream; an identity shuffle is redrawn.
inline std::vector<double> permutation_importance(const TabularModel& model, const FeatureMatrix& data,
                                                  std::uint64_t seed, std::size_t repeats = 5, unsigned threads = 1) {
    if (data.rows() == 0) throw DomainError("permutation importance of an empty matrix");
    if (repeats == 0) throw ConfigError("repeats must be positive");
    detail::require_width(data, feature_width(model));
    const double baseline = accuracy_of(model, data);
    std::vector<double> drop(data.cols(), 0.0);
    parallel_for(data.cols(), threads, [&](std::size_t f) {
        FeatureMatrix shuffled = data;
        std::vector<std::size_t> perm(data.rows());
        double total = 0.0;
        for (std::size_t rep = 0; rep < repeats; ++rep) {
            Rng rng(derive_seed(seed, f * 1'000'003ULL + rep));
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            if (data.rows() > 1) {
                bool identity = true;
                while (identity) {
                    rng.shuffle(std::span<std::size_t>(perm));
                    for (std::size_t i = 0; i < perm.size() && identity; ++i) identity = perm[i] == i;
                }
            }
            for (std::size_t r = 0; r < data.rows(); ++r) shuffled.at(r, f) = data.at(perm[r], f);
            total += baseline - accuracy_of(model, shuffled);
        }
        drop[f] = total / static_cast<double>(repeats);
    });
    return drop;
}

/// Split gain summed per feature (boosted: only the trees used for
/// prediction), normalized to sum to one.
inline std::vector<double> gain_importance(const TabularModel& model) {
    return std::visit(
        [](const auto& m) -> std::vector<double> {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, LogisticModel>) {
                throw DomainError("gain importance needs a tree-based model");
            } else {
                std::size_t n_trees = m.trees.size();
                if constexpr (std::is_same_v<M, BoostedModel>) n_trees = std::min(n_trees, m.best_iteration);
                if (n_trees == 0) throw DomainError("gain importance of a model with zero trees");
                std::vector<double> gain(m.n_features, 0.0);
                for (std::size_t t = 0; t < n_trees; ++t) {
                    for (const auto& node : m.trees[t].nodes()) {
                        if (!node.is_leaf()) gain[static_cast<std::size_t>(node.feature)] += node.gain;
                    }
                }
                const double total = std::accumulate(gain.begin(), gain.end(), 0.0);
                if (total > 0.0) {
                    for (double& g : gain) g /= total;
                }
                return gain;
            }
        },
        model);
}

}  // namespace frustra
