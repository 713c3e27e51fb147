#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "frustra/error.hpp"
#include "frustra/features.hpp"
#include "frustra/parallel.hpp"
#include "frustra/random.hpp"
#include "frustra/tree.hpp"

namespace frustra {

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// Binary cross-entropy of a logit, without forming the probability first.
inline double logit_loss(double z, int y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

/// Per-iteration (or per-round) mean logloss on train and validation data.
struct LossCurve {
    std::vector<double> train;
    std::vector<double> val;
};

namespace detail {

inline void require_binary_labels(const FeatureMatrix& m) {
    if (m.rows() == 0) throw DomainError("training matrix is empty");
    for (const int y : m.labels()) {
        if (y != 0 && y != 1) throw DomainError("labels must be 0 or 1");
    }
}

inline void require_width(const FeatureMatrix& m, std::size_t width) {
    if (m.cols() != width) {
        throw DomainError("matrix has " + std::to_string(m.cols()) + " features, model expects " +
                          std::to_string(width));
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Logistic regression

struct LogisticConfig {
    double l2 = 1e-4;
    std::size_t max_iters = 2000;
    double tol = 1e-6;
};

struct LogisticModel {
    std::vector<double> weights;
    double bias = 0.0;
    double l2 = 0.0;
    std::size_t iterations = 0;
    double final_loss = 0.0;

    double logit(std::span<const double> x) const {
        double z = bias;
        for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * x[j];
        return z;
    }
};

/// Mean negative log-likelihood plus (l2/2)|w|^2 (bias unpenalized). When
/// `grad` is non-empty it receives d/dw followed by d/db.
inline double logistic_objective(const FeatureMatrix& data, std::span<const double> weights, double bias, double l2,
                                 std::span<double> grad = {}) {
    const std::size_t d = weights.size();
    const auto n = static_cast<double>(data.rows());
    double loss = 0.0;
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t r = 0; r < data.rows(); ++r) {
        const auto x = data.row(r);
        double z = bias;
        for (std::size_t j = 0; j < d; ++j) z += weights[j] * x[j];
        loss += logit_loss(z, data.label(r));
        if (!grad.empty()) {
            const double dz = sigmoid(z) - data.label(r);
            for (std::size_t j = 0; j < d; ++j) grad[j] += dz * x[j];
            grad[d] += dz;
        }
    }
    double penalty = 0.0;
    for (const double w : weights) penalty += w * w;
    if (!grad.empty()) {
        for (std::size_t j = 0; j <= d; ++j) grad[j] /= n;
        for (std::size_t j = 0; j < d; ++j) grad[j] += l2 * weights[j];
    }
    return loss / n + 0.5 * l2 * penalty;
}

inline double mean_logloss(const FeatureMatrix& data, const LogisticModel& m) {
    double loss = 0.0;
    for (std::size_t r = 0; r < data.rows(); ++r) loss += logit_loss(m.logit(data.row(r)), data.label(r));
    return loss / static_cast<double>(data.rows());
}

struct LogisticFit {
    LogisticModel model;
    LossCurve curve;
};

/// Full-batch gradient descent with Armijo backtracking; stops when the
/// gradient max-norm drops below tol or after max_iters.
inline LogisticFit train_logistic(const FeatureMatrix& train, const FeatureMatrix* val, const LogisticConfig& cfg = {}) {
    detail::require_binary_labels(train);
    const auto positives = std::count(train.labels().begin(), train.labels().end(), 1);
    if (positives == 0 || static_cast<std::size_t>(positives) == train.rows()) {
        throw TrainingError("logistic regression: training labels contain a single class");
    }
    if (val) detail::require_width(*val, train.cols());
    const std::size_t d = train.cols();

    LogisticFit fit;
    auto& m = fit.model;
    m.weights.assign(d, 0.0);
    m.l2 = cfg.l2;
    std::vector<double> grad(d + 1);
    std::vector<double> w_try(d);
    double step = 1.0;
    double loss = logistic_objective(train, m.weights, m.bias, cfg.l2, grad);

    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
        if (!std::isfinite(loss)) {
            throw TrainingError("logistic regression: non-finite loss at iteration " + std::to_string(it));
        }
        double gmax = 0.0;
        double gnorm2 = 0.0;
        for (const double g : grad) {
            gmax = std::max(gmax, std::abs(g));
            gnorm2 += g * g;
        }
        if (gmax < cfg.tol) break;

        step = std::min(step * 2.0, 1e6);
        double trial = 0.0;
        double b_try = 0.0;
        for (;;) {
            for (std::size_t j = 0; j < d; ++j) w_try[j] = m.weights[j] - step * grad[j];
            b_try = m.bias - step * grad[d];
            trial = logistic_objective(train, w_try, b_try, cfg.l2);
            if (std::isfinite(trial) && trial <= loss - 1e-4 * step * gnorm2) break;
            step *= 0.5;
            if (step < 1e-20) break;
        }
        if (step < 1e-20) break;
        m.weights = w_try;
        m.bias = b_try;
        loss = logistic_objective(train, m.weights, m.bias, cfg.l2, grad);
        m.iterations = it + 1;
        fit.curve.train.push_back(mean_logloss(train, m));
        if (val) fit.curve.val.push_back(mean_logloss(*val, m));
    }
    m.final_loss = loss;
    return fit;
}

// ---------------------------------------------------------------------------
// Random forest

struct ForestConfig {
    std::size_t trees = 300;
    /// 0 selects ceil(sqrt(feature count)).
    std::size_t features_per_split = 0;
    std::size_t max_depth = 0;
    std::size_t min_leaf = 1;
    std::uint64_t seed = 42;
    unsigned threads = 1;
};

struct ForestModel {
    std::vector<DecisionTree> trees;
    std::size_t n_features = 0;
    std::size_t features_per_split = 0;
    std::uint64_t seed = 0;

    double predict(std::span<const double> x) const {
        double sum = 0.0;
        for (const auto& t : trees) sum += t.predict(x);
        return sum / static_cast<double>(trees.size());
    }
};

/// Bootstrap-resampled Gini CART trees. Tree t draws its bootstrap and its
/// per-split feature subsets from stream (seed, t), so the forest does not
/// depend on the thread count.
inline ForestModel train_forest(const FeatureMatrix& train, const ForestConfig& cfg = {}) {
    detail::require_binary_labels(train);
    if (cfg.trees == 0) throw ConfigError("forest needs at least one tree");
    ForestModel model;
    model.n_features = train.cols();
    model.features_per_split = cfg.features_per_split != 0
                                   ? cfg.features_per_split
                                   : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(train.cols()))));
    model.seed = cfg.seed;
    model.trees.resize(cfg.trees);

    const ColumnData data(train);
    const GiniCriterion crit{.labels = train.labels(), .min_leaf = static_cast<double>(cfg.min_leaf)};
    const TreeParams params{.max_depth = cfg.max_depth, .features_per_split = model.features_per_split};
    parallel_for(cfg.trees, cfg.threads, [&](std::size_t t) {
        Rng rng(derive_seed(cfg.seed, t));
        std::vector<std::uint32_t> multiplicity(train.rows(), 0);
        for (std::size_t i = 0; i < train.rows(); ++i) ++multiplicity[rng.below(train.rows())];
        model.trees[t] = build_tree(data, multiplicity, crit, params, &rng);
    });
    return model;
}

// ---------------------------------------------------------------------------
// Gradient-boosted trees

struct BoostedConfig {
    std::size_t rounds = 400;
    double learning_rate = 0.1;
    std::size_t max_depth = 6;
    double lambda = 1.0;
    double min_child_weight = 1.0;
    /// Patience in rounds on validation logloss; 0 disables early stopping.
    std::size_t early_stop = 20;
};

struct BoostedModel {
    std::vector<DecisionTree> trees;
    double learning_rate = 0.1;
    double base_score = 0.0;
    /// Number of leading trees used for prediction.
    std::size_t best_iteration = 0;
    std::size_t n_features = 0;

    double margin(std::span<const double> x, std::size_t n_trees) const {
        double z = base_score;
        for (std::size_t t = 0; t < n_trees && t < trees.size(); ++t) z += learning_rate * trees[t].predict(x);
        return z;
    }
    double predict(std::span<const double> x) const { return sigmoid(margin(x, best_iteration)); }
};

struct BoostedFit {
    BoostedModel model;
    LossCurve curve;
};

/// Newton boosting on the logistic loss with validation early stopping.
inline BoostedFit train_boosted(const FeatureMatrix& train, const FeatureMatrix* val, const BoostedConfig& cfg = {}) {
    detail::require_binary_labels(train);
    if (!(cfg.learning_rate > 0.0 && cfg.learning_rate <= 1.0)) throw ConfigError("learning_rate must be in (0, 1]");
    if (val) detail::require_width(*val, train.cols());

    BoostedFit fit;
    auto& m = fit.model;
    m.learning_rate = cfg.learning_rate;
    m.n_features = train.cols();
    const auto n = train.rows();
    const double prior = std::clamp(
        static_cast<double>(std::count(train.labels().begin(), train.labels().end(), 1)) / static_cast<double>(n),
        1e-6, 1.0 - 1e-6);
    m.base_score = std::log(prior / (1.0 - prior));

    const ColumnData data(train);
    const std::vector<std::uint32_t> all_rows(n, 1);
    std::vector<double> score(n, m.base_score);
    std::vector<double> val_score(val ? val->rows() : 0, m.base_score);
    std::vector<double> grad(n);
    std::vector<double> hess(n);
    const TreeParams params{.max_depth = cfg.max_depth, .features_per_split = 0};

    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    for (std::size_t round = 0; round < cfg.rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(score[i]);
            grad[i] = p - train.label(i);
            hess[i] = p * (1.0 - p);
            if (!std::isfinite(grad[i]) || !std::isfinite(hess[i])) {
                throw TrainingError("boosting: non-finite gradient statistics in round " + std::to_string(round + 1));
            }
        }
        const NewtonCriterion crit{.grad = grad, .hess = hess, .lambda = cfg.lambda,
                                   .min_child_weight = cfg.min_child_weight};
        m.trees.push_back(build_tree(data, all_rows, crit, params));
        const auto& tree = m.trees.back();

        double train_loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            score[i] += cfg.learning_rate * tree.predict(train.row(i));
            train_loss += logit_loss(score[i], train.label(i));
        }
        fit.curve.train.push_back(train_loss / static_cast<double>(n));
        if (!std::isfinite(fit.curve.train.back())) {
            throw TrainingError("boosting: non-finite training loss in round " + std::to_string(round + 1));
        }
        if (!val) {
            m.best_iteration = m.trees.size();
            continue;
        }
        double val_loss = 0.0;
        for (std::size_t i = 0; i < val->rows(); ++i) {
            val_score[i] += cfg.learning_rate * tree.predict(val->row(i));
            val_loss += logit_loss(val_score[i], val->label(i));
        }
        val_loss /= static_cast<double>(val->rows());
        fit.curve.val.push_back(val_loss);
        if (val_loss < best_val) {
            best_val = val_loss;
            m.best_iteration = m.trees.size();
            since_best = 0;
        } else if (cfg.early_stop > 0 && ++since_best >= cfg.early_stop) {
            break;
        }
    }
    return fit;
}

// ---------------------------------------------------------------------------

using TabularModel = std::variant<LogisticModel, ForestModel, BoostedModel>;

inline std::size_t feature_width(const TabularModel& model) {
    return std::visit(
        [](const auto& m) -> std::size_t {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, LogisticModel>) return m.weights.size();
            else return m.n_features;
        },
        model);
}

inline double predict_one(const TabularModel& model, std::span<const double> x) {
    return std::visit(
        [&](const auto& m) -> double {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, LogisticModel>) return sigmoid(m.logit(x));
            else return m.predict(x);
        },
        model);
}

inline std::vector<double> predict_proba(const TabularModel& model, const FeatureMatrix& rows) {
    detail::require_width(rows, feature_width(model));
    std::vector<double> out(rows.rows());
    for (std::size_t r = 0; r < rows.rows(); ++r) out[r] = predict_one(model, rows.row(r));
    return out;
}

}  // namespace frustra
