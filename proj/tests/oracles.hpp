#pragma once

// Brute-force reference implementations used to cross-check the library.
// They deliberately avoid the library's helpers and data layouts.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "frustra/ingest.hpp"
#include "frustra/random.hpp"
#include "frustra/sessionize.hpp"

namespace oracle {

inline int symbol_of(const frustra::RawEvent& e) {
    if (!e.product_action) return 1;
    switch (*e.product_action) {
        case frustra::ProductAction::detail: return 2;
        case frustra::ProductAction::click: return 3;
        case frustra::ProductAction::add: return 4;
        case frustra::ProductAction::remove: return 5;
        case frustra::ProductAction::purchase: return 6;
    }
    return 0;
}

struct Labels {
    std::size_t rage = 0;
    std::size_t u_turns = 0;
    bool churn = false;
    bool search = false;
    bool wander = false;
    int label = 0;
    std::vector<int> truncated;
};

/// Events of one session, any order.
inline Labels label_session(std::vector<frustra::RawEvent> ev) {
    std::stable_sort(ev.begin(), ev.end(),
                     [](const auto& a, const auto& b) { return a.timestamp_ms < b.timestamp_ms; });
    const std::size_t n = ev.size();
    std::vector<int> sym(n);
    for (std::size_t i = 0; i < n; ++i) sym[i] = symbol_of(ev[i]);
    Labels out;

    // Rage: in time order, each still-free event opens a window over the free
    // events sharing its url and symbol.
    std::vector<bool> used(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (used[i]) continue;
        std::vector<std::size_t> members;
        for (std::size_t j = i; j < n; ++j) {
            if (!used[j] && ev[j].url_hash == ev[i].url_hash && sym[j] == sym[i] &&
                ev[j].timestamp_ms - ev[i].timestamp_ms <= 2000) {
                members.push_back(j);
            }
        }
        if (members.size() >= 3) {
            ++out.rage;
            for (const auto j : members) used[j] = true;
        }
    }

    for (std::size_t i = 1; i + 1 < n; ++i) {
        const bool shape = ev[i - 1].url_hash == ev[i + 1].url_hash && ev[i].url_hash != ev[i - 1].url_hash;
        const bool quick = ev[i + 1].timestamp_ms - ev[i].timestamp_ms <= 2000;
        const bool browse = sym[i] <= 3;
        if (shape && quick && browse) ++out.u_turns;
    }

    const auto count = [&](int s) { return std::count(sym.begin(), sym.end(), s); };
    const bool purchased = count(6) > 0;
    const bool added = count(4) > 0;
    for (std::size_t i = 0; i < n && !purchased; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (sym[i] == 4 && sym[j] == 5) out.churn = true;
        }
    }
    out.search = !added && !purchased && count(3) >= 3;
    const auto duration = n == 0 ? 0 : ev.back().timestamp_ms - ev.front().timestamp_ms;
    out.wander = !added && !purchased && count(2) >= 5 && duration > 1'200'000;
    out.label = (out.rage > 0 || out.u_turns > 0 || out.churn || out.search || out.wander) ? 1 : 0;
    for (std::size_t i = 0; i < n && sym[i] != 6; ++i) out.truncated.push_back(sym[i]);
    return out;
}

/// Exact count over a denominator.
struct Ratio {
    long num = 0;
    long den = 1;
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

struct Features {
    std::array<Ratio, 5> unigram;
    std::array<Ratio, 25> bigram;
    std::array<Ratio, 6> motif;
    double entropy = 0.0;
};

/// Motif id of a 4-window from its horizontal visibility graph, built
/// by checking every non-adjacent pair against all points between them.
inline int motif_of(const std::array<int, 4>& x) {
    std::set<std::pair<int, int>> extra;
    for (int a = 0; a < 4; ++a) {
        for (int b = a + 2; b < 4; ++b) {
            bool visible = true;
            for (int c = a + 1; c < b; ++c) visible = visible && x[c] < x[a] && x[c] < x[b];
            if (visible) extra.insert({a, b});
        }
    }
    using E = std::set<std::pair<int, int>>;
    static const std::vector<std::pair<E, int>> table{
        {E{}, 1},
        {E{{0, 2}}, 2},
        {E{{1, 3}}, 3},
        {E{{0, 2}, {0, 3}}, 4},
        {E{{1, 3}, {0, 3}}, 5},
        {E{{0, 3}}, 6},
    };
    for (const auto& [edges, id] : table) {
        if (edges == extra) return id;
    }
    return 0;
}

inline Features features(const std::vector<int>& s) {
    Features f;
    const long n = static_cast<long>(s.size());
    for (int a = 1; a <= 5; ++a) {
        f.unigram[a - 1] = {static_cast<long>(std::count(s.begin(), s.end(), a)), n};
    }
    for (int a = 1; a <= 5; ++a) {
        for (int b = 1; b <= 5; ++b) {
            long c = 0;
            for (long i = 0; i + 1 < n; ++i) c += (s[i] == a && s[i + 1] == b) ? 1 : 0;
            f.bigram[5 * (a - 1) + (b - 1)] = {c, n - 1};
        }
    }
    if (n >= 4) {
        std::array<long, 6> counts{};
        for (long i = 0; i + 3 < n; ++i) {
            const int id = motif_of({s[i], s[i + 1], s[i + 2], s[i + 3]});
            ++counts[id - 1];
        }
        long double h = 0.0L;
        for (int k = 0; k < 6; ++k) {
            f.motif[k] = {counts[k], n - 3};
            if (counts[k] > 0) {
                const long double p = static_cast<long double>(counts[k]) / static_cast<long double>(n - 3);
                h -= p * std::log(p);
            }
        }
        f.entropy = static_cast<double>(h);
    }
    return f;
}

inline std::vector<int> random_sequence(frustra::Rng& rng, std::size_t min_len, std::size_t max_len, int alphabet = 5) {
    const auto len = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(min_len),
                                                          static_cast<std::int64_t>(max_len)));
    std::vector<int> s(len);
    for (auto& v : s) v = static_cast<int>(rng.between(1, alphabet));
    return s;
}

/// Exhaustive pairwise AUC: P(score_pos > score_neg) + 0.5 P(tie).
inline double pairwise_auc(const std::vector<int>& labels, const std::vector<double>& scores) {
    long double wins = 0.0L;
    long pairs = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0L;
            else if (scores[i] == scores[j]) wins += 0.5L;
        }
    }
    return static_cast<double>(wins / static_cast<long double>(pairs));
}

/// Inverse of the Yeo-Johnson transform.
inline double yeo_johnson_inverse(double z, double lambda) {
    if (z >= 0.0) {
        if (std::abs(lambda) < 1e-12) return std::expm1(z);
        return std::pow(lambda * z + 1.0, 1.0 / lambda) - 1.0;
    }
    if (std::abs(lambda - 2.0) < 1e-12) return -std::expm1(-z);
    return 1.0 - std::pow(1.0 - (2.0 - lambda) * z, 1.0 / (2.0 - lambda));
}

inline double skewness(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double m2 = 0.0, m3 = 0.0;
    for (const double v : x) {
        m2 += (v - mean) * (v - mean);
        m3 += (v - mean) * (v - mean) * (v - mean);
    }
    m2 /= n;
    m3 /= n;
    return m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
}

/// Sequences over symbols 1..5 labeled 1 iff they contain a 4 directly followed by a 5.
struct PlantedTask {
    std::vector<std::vector<frustra::Symbol>> seqs;
    std::vector<int> labels;
};

inline bool has_pair(const std::vector<frustra::Symbol>& s) {
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        if (s[i] == frustra::Symbol::add && s[i + 1] == frustra::Symbol::remove) return true;
    }
    return false;
}

inline PlantedTask planted_task(std::size_t n, std::size_t min_len, std::size_t max_len, std::uint64_t seed) {
    PlantedTask t;
    frustra::Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const auto raw = random_sequence(rng, min_len, max_len);
        std::vector<frustra::Symbol> s(raw.size());
        for (std::size_t k = 0; k < raw.size(); ++k) s[k] = static_cast<frustra::Symbol>(raw[k]);
        t.labels.push_back(has_pair(s) ? 1 : 0);
        t.seqs.push_back(std::move(s));
    }
    return t;
}

}  // namespace oracle
