#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "frustra/error.hpp"
#include "frustra/features.hpp"
#include "frustra/random.hpp"

namespace frustra {

struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    /// Split gain (impurity decrease or loss reduction); zero for leaves.
    double gain = 0.0;
    double cover = 0.0;

    bool is_leaf() const { return feature < 0; }
};

/// Binary tree stored as a node array; node 0 is the root. Rows with
/// x[feature] <= threshold go left.
class DecisionTree {
public:
    DecisionTree() = default;
    explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

    const std::vector<TreeNode>& nodes() const { return nodes_; }

    double predict(std::span<const double> x) const {
        std::size_t i = 0;
        while (!nodes_[i].is_leaf()) {
            const auto& n = nodes_[i];
            i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
        }
        return nodes_[i].value;
    }

    std::size_t depth() const {
        std::size_t best = 0;
        std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
        while (!stack.empty()) {
            const auto [i, d] = stack.back();
            stack.pop_back();
            best = std::max(best, d);
            if (!nodes_[i].is_leaf()) {
                stack.emplace_back(static_cast<std::size_t>(nodes_[i].left), d + 1);
                stack.emplace_back(static_cast<std::size_t>(nodes_[i].right), d + 1);
            }
        }
        return best;
    }

    /// Throws if the node array is not a well-formed binary tree.
    void validate(std::size_t n_features) const {
        if (nodes_.empty()) throw DataError("tree has no nodes");
        std::vector<int> parents(nodes_.size(), 0);
        for (const auto& n : nodes_) {
            if (n.is_leaf()) {
                if (!std::isfinite(n.value)) throw DataError("non-finite leaf value");
                continue;
            }
            if (static_cast<std::size_t>(n.feature) >= n_features) throw DataError("split feature out of range");
            for (const int child : {n.left, n.right}) {
                if (child <= 0 || static_cast<std::size_t>(child) >= nodes_.size()) {
                    throw DataError("child index out of range");
                }
                ++parents[static_cast<std::size_t>(child)];
            }
        }
        for (std::size_t i = 1; i < nodes_.size(); ++i) {
            if (parents[i] != 1) throw DataError("tree node with " + std::to_string(parents[i]) + " parents");
        }
    }

private:
    std::vector<TreeNode> nodes_;
};

/// Column-major copy of a feature matrix plus each column's row order sorted
/// by value. Built once and shared by all trees of a model.
class ColumnData {
public:
    explicit ColumnData(const FeatureMatrix& m) : rows_(m.rows()), cols_(m.cols()) {
        values_.resize(rows_ * cols_);
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t c = 0; c < cols_; ++c) values_[c * rows_ + r] = m.at(r, c);
        }
        order_.resize(rows_ * cols_);
        for (std::size_t c = 0; c < cols_; ++c) {
            auto first = order_.begin() + static_cast<std::ptrdiff_t>(c * rows_);
            std::iota(first, first + static_cast<std::ptrdiff_t>(rows_), std::uint32_t{0});
            const double* col = &values_[c * rows_];
            std::stable_sort(first, first + static_cast<std::ptrdiff_t>(rows_),
                             [col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double value(std::size_t row, std::size_t col) const { return values_[col * rows_ + row]; }
    std::span<const std::uint32_t> order(std::size_t col) const { return {&order_[col * rows_], rows_}; }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> values_;
    std::vector<std::uint32_t> order_;
};

struct TreeParams {
    /// 0 means unlimited.
    std::size_t max_depth = 0;
    /// Candidate features per split; 0 means all.
    std::size_t features_per_split = 0;
};

/// Gini impurity for 0/1 labels; leaves hold the positive fraction.
struct GiniCriterion {
    std::span<const int> labels;
    double min_leaf = 1.0;

    struct Stats {
        double n = 0.0;
        double pos = 0.0;
    };

    void add(Stats& s, std::uint32_t row) const {
        s.n += 1.0;
        s.pos += labels[row];
    }
    static Stats diff(const Stats& a, const Stats& b) { return {a.n - b.n, a.pos - b.pos}; }
    /// n * (1 - gini)
    static double score(const Stats& s) {
        if (s.n <= 0.0) return 0.0;
        const double neg = s.n - s.pos;
        return (s.pos * s.pos + neg * neg) / s.n;
    }
    double gain(const Stats& parent, const Stats& left, const Stats& right) const {
        return score(left) + score(right) - score(parent);
    }
    bool admissible(const Stats& left, const Stats& right) const { return left.n >= min_leaf && right.n >= min_leaf; }
    bool splittable(const Stats& s) const { return s.pos > 0.0 && s.pos < s.n && s.n >= 2.0 * min_leaf; }
    /// Zero-improvement splits of an impure node are allowed, as in classic CART.
    bool accept(double gain) const { return gain > -1e-9; }
    static double leaf_value(const Stats& s) { return s.n > 0.0 ? s.pos / s.n : 0.0; }
};

/// Second-order statistics of a twice-differentiable loss; leaves hold -G/(H+lambda).
struct NewtonCriterion {
    std::span<const double> grad;
    std::span<const double> hess;
    double lambda = 1.0;
    double min_child_weight = 1.0;

    struct Stats {
        double g = 0.0;
        double h = 0.0;
        double n = 0.0;
    };

    void add(Stats& s, std::uint32_t row) const {
        s.g += grad[row];
        s.h += hess[row];
        s.n += 1.0;
    }
    static Stats diff(const Stats& a, const Stats& b) { return {a.g - b.g, a.h - b.h, a.n - b.n}; }
    double score(const Stats& s) const { return s.g * s.g / (s.h + lambda); }
    double gain(const Stats& parent, const Stats& left, const Stats& right) const {
        return 0.5 * (score(left) + score(right) - score(parent));
    }
    bool admissible(const Stats& left, const Stats& right) const {
        return left.h >= min_child_weight && right.h >= min_child_weight;
    }
    bool splittable(const Stats& s) const { return s.n >= 2.0; }
    bool accept(double gain) const { return gain > 0.0; }
    double leaf_value(const Stats& s) const { return -s.g / (s.h + lambda); }
};

/// Exact greedy CART over a multiset of rows (a row may repeat, as in a
/// bootstrap sample). Ties in gain keep the lowest feature index, then the
/// lowest threshold. `feature_rng` is required when features_per_split is set.
template <class Criterion>
DecisionTree build_tree(const ColumnData& data, std::span<const std::uint32_t> multiplicity,
                        const Criterion& crit, const TreeParams& params, Rng* feature_rng = nullptr) {
    const std::size_t n_cols = data.cols();
    using Stats = typename Criterion::Stats;

    // Per feature, the sample entries sorted by that feature's value.
    std::size_t n_entries = 0;
    for (const auto m : multiplicity) n_entries += m;
    if (n_entries == 0) throw DomainError("cannot grow a tree on zero rows");
    std::vector<std::uint32_t> sorted(n_entries * n_cols);
    for (std::size_t c = 0; c < n_cols; ++c) {
        std::size_t k = c * n_entries;
        for (const auto row : data.order(c)) {
            for (std::uint32_t rep = 0; rep < multiplicity[row]; ++rep) sorted[k++] = row;
        }
    }
    std::vector<std::uint8_t> goes_left(data.rows(), 0);
    std::vector<std::uint32_t> scratch(n_entries);

    std::vector<std::size_t> all_features(n_cols);
    std::iota(all_features.begin(), all_features.end(), std::size_t{0});
    const std::size_t k_features =
        params.features_per_split == 0 ? n_cols : std::min(params.features_per_split, n_cols);

    std::vector<TreeNode> nodes;
    struct Work {
        std::size_t node;
        std::size_t begin;
        std::size_t end;
        std::size_t depth;
        Stats stats;
    };

    Stats root{};
    for (std::size_t i = 0; i < n_entries; ++i) crit.add(root, sorted[i]);
    nodes.push_back(TreeNode{});
    std::vector<Work> stack{{0, 0, n_entries, 0, root}};
    std::vector<std::size_t> candidates;

    while (!stack.empty()) {
        const Work w = stack.back();
        stack.pop_back();
        TreeNode& node = nodes[w.node];
        node.value = crit.leaf_value(w.stats);
        node.cover = w.stats.n;
        const bool depth_ok = params.max_depth == 0 || w.depth < params.max_depth;
        if (!depth_ok || !crit.splittable(w.stats)) continue;

        if (k_features < n_cols) {
            candidates = all_features;
            for (std::size_t i = 0; i < k_features; ++i) {
                const auto j = i + static_cast<std::size_t>(feature_rng->below(n_cols - i));
                std::swap(candidates[i], candidates[j]);
            }
            candidates.resize(k_features);
            std::sort(candidates.begin(), candidates.end());
        } else {
            candidates = all_features;
        }

        int best_feature = -1;
        double best_gain = -std::numeric_limits<double>::infinity();
        double best_threshold = 0.0;
        for (const auto f : candidates) {
            const std::uint32_t* entries = &sorted[f * n_entries];
            Stats left{};
            for (std::size_t i = w.begin; i + 1 < w.end; ++i) {
                crit.add(left, entries[i]);
                const double a = data.value(entries[i], f);
                const double b = data.value(entries[i + 1], f);
                if (!(a < b)) continue;
                const Stats right = Criterion::diff(w.stats, left);
                if (!crit.admissible(left, right)) continue;
                const double gain = crit.gain(w.stats, left, right);
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = static_cast<int>(f);
                    double t = a + (b - a) / 2.0;
                    if (!(a < t && t < b)) t = a;
                    best_threshold = t;
                }
            }
        }
        if (best_feature < 0 || !crit.accept(best_gain)) continue;

        const auto bf = static_cast<std::size_t>(best_feature);
        const std::uint32_t* split_entries = &sorted[bf * n_entries];
        std::size_t n_left = 0;
        Stats left_stats{};
        for (std::size_t i = w.begin; i < w.end; ++i) {
            const auto row = split_entries[i];
            const bool left = data.value(row, bf) <= best_threshold;
            goes_left[row] = left ? 1 : 0;
            if (left) {
                ++n_left;
                crit.add(left_stats, row);
            }
        }
        for (std::size_t c = 0; c < n_cols; ++c) {
            std::uint32_t* entries = &sorted[c * n_entries];
            std::size_t l = w.begin;
            std::size_t r = 0;
            for (std::size_t i = w.begin; i < w.end; ++i) {
                if (goes_left[entries[i]]) entries[l++] = entries[i];
                else scratch[r++] = entries[i];
            }
            std::copy(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(r), entries + l);
        }

        const auto left_id = nodes.size();
        const auto right_id = left_id + 1;
        nodes.emplace_back();
        nodes.emplace_back();
        TreeNode& parent = nodes[w.node];
        parent.feature = best_feature;
        parent.threshold = best_threshold;
        parent.left = static_cast<int>(left_id);
        parent.right = static_cast<int>(right_id);
        parent.gain = std::max(0.0, best_gain);
        const Stats right_stats = Criterion::diff(w.stats, left_stats);
        const std::size_t mid = w.begin + n_left;
        stack.push_back({right_id, mid, w.end, w.depth + 1, right_stats});
        stack.push_back({left_id, w.begin, mid, w.depth + 1, left_stats});
    }
    return DecisionTree(std::move(nodes));
}

}  // namespace frustra
