#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "frustra/error.hpp"
#include "frustra/sessionize.hpp"
#include "frustra/text.hpp"

namespace frustra {

/// Thresholds of the five frustration rules and the length filter.
struct RuleConfig {
    std::size_t rage_min_events = 3;
    std::int64_t rage_window_ms = 2000;
    std::int64_t u_turn_window_ms = 2000;
    std::size_t search_min_clicks = 3;
    std::int64_t wander_min_duration_ms = 1'200'000;
    std::size_t wander_min_details = 5;
    std::size_t min_length = 2;
    std::size_t max_length = 1000;

    static RuleConfig from_config(const KeyValueConfig& cfg) {
        RuleConfig r;
        for (const auto& [key, _] : cfg.entries()) {
            static const std::vector<std::string> known{
                "rage_min_events",  "rage_window_ms",     "u_turn_window_ms", "search_min_clicks",
                "wander_min_duration_ms", "wander_min_details", "min_length", "max_length"};
            if (std::find(known.begin(), known.end(), key) == known.end()) {
                throw ConfigError("unknown rule key '" + key + "'");
            }
        }
        r.rage_min_events = cfg.number_or<std::size_t>("rage_min_events", r.rage_min_events);
        r.rage_window_ms = cfg.number_or<std::int64_t>("rage_window_ms", r.rage_window_ms);
        r.u_turn_window_ms = cfg.number_or<std::int64_t>("u_turn_window_ms", r.u_turn_window_ms);
        r.search_min_clicks = cfg.number_or<std::size_t>("search_min_clicks", r.search_min_clicks);
        r.wander_min_duration_ms =
            cfg.number_or<std::int64_t>("wander_min_duration_ms", r.wander_min_duration_ms);
        r.wander_min_details = cfg.number_or<std::size_t>("wander_min_details", r.wander_min_details);
        r.min_length = cfg.number_or<std::size_t>("min_length", r.min_length);
        r.max_length = cfg.number_or<std::size_t>("max_length", r.max_length);
        if (r.rage_min_events < 1 || r.min_length < 1 || r.max_length < r.min_length) {
            throw ConfigError("inconsistent rule thresholds");
        }
        return r;
    }
};

struct FrustrationSignals {
    std::size_t rage_bursts = 0;
    std::size_t u_turns = 0;
    bool cart_churn = false;
    bool search_struggle = false;
    bool long_wander = false;

    bool any() const { return rage_bursts > 0 || u_turns > 0 || cart_churn || search_struggle || long_wander; }

    friend bool operator==(const FrustrationSignals&, const FrustrationSignals&) = default;
};

struct LabeledSession {
    std::string session_id;
    FrustrationSignals signals;
    int label = 0;
    SymbolSequence truncated_symbols;
    std::vector<std::int64_t> truncated_timestamps_ms;
    std::int64_t first_event_ms = 0;

    friend bool operator==(const LabeledSession&, const LabeledSession&) = default;
};

/// Repeated events on one (url, symbol) pair. For each pair, scan its events in
/// time order; from the earliest unconsumed event take every event within the
/// window, and if there are enough of them count a burst and consume them all.
inline std::size_t detect_rage_bursts(const Session& s, const RuleConfig& rules = {}) {
    std::map<std::pair<std::string_view, Symbol>, std::vector<std::int64_t>> groups;
    for (std::size_t i = 0; i < s.size(); ++i) {
        groups[{s.url_hashes[i], s.symbols[i]}].push_back(s.timestamps_ms[i]);
    }
    std::size_t bursts = 0;
    for (const auto& [_, ts] : groups) {
        std::size_t i = 0;
        while (i < ts.size()) {
            std::size_t j = i;
            while (j + 1 < ts.size() && ts[j + 1] - ts[i] <= rules.rage_window_ms) ++j;
            if (j - i + 1 >= rules.rage_min_events) {
                ++bursts;
                i = j + 1;
            } else {
                ++i;
            }
        }
    }
    return bursts;
}

/// A -> B -> A where the return leg is within the window and B is not a cart
/// or purchase action. Overlapping patterns each count.
inline std::size_t detect_u_turns(const Session& s, const RuleConfig& rules = {}) {
    std::size_t count = 0;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        const auto sym = s.symbols[i];
        if (sym == Symbol::add || sym == Symbol::remove || sym == Symbol::purchase) continue;
        if (s.url_hashes[i - 1] != s.url_hashes[i + 1] || s.url_hashes[i] == s.url_hashes[i - 1]) continue;
        if (s.timestamps_ms[i + 1] - s.timestamps_ms[i] <= rules.u_turn_window_ms) ++count;
    }
    return count;
}

/// An add followed later by a remove, in a session without any purchase.
inline bool detect_cart_churn(const SymbolSequence& symbols) {
    bool added = false;
    bool churned = false;
    for (const auto s : symbols) {
        if (s == Symbol::purchase) return false;
        if (s == Symbol::add) added = true;
        else if (s == Symbol::remove && added) churned = true;
    }
    return churned;
}

inline bool detect_cart_churn(const Session& s) { return detect_cart_churn(s.symbols); }

inline bool detect_search_struggle(const SymbolSequence& symbols, const RuleConfig& rules = {}) {
    std::size_t clicks = 0;
    for (const auto s : symbols) {
        if (s == Symbol::add || s == Symbol::purchase) return false;
        if (s == Symbol::click) ++clicks;
    }
    return clicks >= rules.search_min_clicks;
}

inline bool detect_search_struggle(const Session& s, const RuleConfig& rules = {}) {
    return detect_search_struggle(s.symbols, rules);
}

inline bool detect_long_wander(const Session& s, const RuleConfig& rules = {}) {
    if (s.size() == 0) return false;
    if (s.timestamps_ms.back() - s.timestamps_ms.front() <= rules.wander_min_duration_ms) return false;
    std::size_t details = 0;
    for (const auto sym : s.symbols) {
        if (sym == Symbol::add || sym == Symbol::purchase) return false;
        if (sym == Symbol::detail) ++details;
    }
    return details >= rules.wander_min_details;
}

inline FrustrationSignals detect_signals(const Session& s, const RuleConfig& rules = {}) {
    return FrustrationSignals{
        .rage_bursts = detect_rage_bursts(s, rules),
        .u_turns = detect_u_turns(s, rules),
        .cart_churn = detect_cart_churn(s),
        .search_struggle = detect_search_struggle(s, rules),
        .long_wander = detect_long_wander(s, rules),
    };
}

/// Signals come from the full session; the sequences handed to models stop
/// strictly before the first purchase.
inline LabeledSession label_and_truncate(const Session& s, const RuleConfig& rules = {}) {
    LabeledSession out;
    out.session_id = s.session_id;
    out.signals = detect_signals(s, rules);
    out.label = out.signals.any() ? 1 : 0;
    out.first_event_ms = s.timestamps_ms.empty() ? 0 : s.timestamps_ms.front();
    const auto cut = static_cast<std::size_t>(
        std::find(s.symbols.begin(), s.symbols.end(), Symbol::purchase) - s.symbols.begin());
    out.truncated_symbols.assign(s.symbols.begin(), s.symbols.begin() + static_cast<std::ptrdiff_t>(cut));
    out.truncated_timestamps_ms.assign(s.timestamps_ms.begin(),
                                       s.timestamps_ms.begin() + static_cast<std::ptrdiff_t>(cut));
    return out;
}

struct FilterStats {
    std::size_t sessions_in = 0;
    std::size_t kept = 0;
    std::size_t dropped_empty_after_truncation = 0;
    std::size_t dropped_too_short = 0;
    std::size_t dropped_too_long = 0;
    std::size_t kept_frustrated = 0;

    void write(std::ostream& out) const {
        out << "sessions_in=" << sessions_in << '\n'
            << "kept=" << kept << '\n'
            << "kept_frustrated=" << kept_frustrated << '\n'
            << "kept_non_frustrated=" << kept - kept_frustrated << '\n'
            << "dropped_empty_after_truncation=" << dropped_empty_after_truncation << '\n'
            << "dropped_too_short=" << dropped_too_short << '\n'
            << "dropped_too_long=" << dropped_too_long << '\n';
    }
};

struct FilterResult {
    std::vector<LabeledSession> sessions;
    FilterStats stats;
};

/// Drops sessions whose truncated length is outside [min_length, max_length].
/// Empty-after-truncation is reported separately from other short sessions.
inline FilterResult preprocess_filter(std::vector<LabeledSession> labeled, const RuleConfig& rules = {}) {
    FilterResult r;
    r.stats.sessions_in = labeled.size();
    for (auto& s : labeled) {
        const auto n = s.truncated_symbols.size();
        if (n == 0 && rules.min_length > 0) {
            ++r.stats.dropped_empty_after_truncation;
        } else if (n < rules.min_length) {
            ++r.stats.dropped_too_short;
        } else if (n > rules.max_length) {
            ++r.stats.dropped_too_long;
        } else {
            r.stats.kept_frustrated += static_cast<std::size_t>(s.label);
            r.sessions.push_back(std::move(s));
        }
    }
    r.stats.kept = r.sessions.size();
    return r;
}

inline constexpr std::string_view labeled_header =
    "session_id\tlabel\trage_bursts\tu_turns\tcart_churn\tsearch_struggle\tlong_wander\t"
    "truncated_symbols\ttruncated_timestamps_ms\tfirst_event_ms";

inline void write_labeled(std::ostream& out, const std::vector<LabeledSession>& sessions) {
    out << labeled_header << '\n';
    for (const auto& s : sessions) {
        out << s.session_id << '\t' << s.label << '\t' << s.signals.rage_bursts << '\t' << s.signals.u_turns
            << '\t' << int(s.signals.cart_churn) << '\t' << int(s.signals.search_struggle) << '\t'
            << int(s.signals.long_wander) << '\t' << join_space(s.truncated_symbols) << '\t'
            << join_space(s.truncated_timestamps_ms) << '\t' << s.first_event_ms << '\n';
    }
}

inline std::vector<LabeledSession> read_labeled(std::string_view text) {
    std::vector<LabeledSession> out;
    std::size_t pos = 0;
    bool header = true;
    auto flag = [](const std::string& f) {
        if (f == "0") return false;
        if (f == "1") return true;
        throw DataError("expected 0/1 flag, got '" + f + "'");
    };
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (header) {
            if (line != labeled_header) throw DataError("not a labeled-sessions file (unexpected header)");
            header = false;
            continue;
        }
        if (line.empty()) continue;
        const auto f = split_delimited(line, '\t');
        if (f.size() != 10) throw DataError("labeled record with " + std::to_string(f.size()) + " fields");
        LabeledSession s;
        s.session_id = f[0];
        s.label = parse_or_throw<int>(f[1], "label");
        if (s.label != 0 && s.label != 1) throw DataError("label must be 0 or 1");
        s.signals.rage_bursts = parse_or_throw<std::size_t>(f[2], "rage_bursts");
        s.signals.u_turns = parse_or_throw<std::size_t>(f[3], "u_turns");
        s.signals.cart_churn = flag(f[4]);
        s.signals.search_struggle = flag(f[5]);
        s.signals.long_wander = flag(f[6]);
        s.truncated_symbols = parse_symbols(f[7]);
        s.truncated_timestamps_ms = parse_timestamps(f[8]);
        s.first_event_ms = parse_or_throw<std::int64_t>(f[9], "first_event_ms");
        if (s.truncated_symbols.size() != s.truncated_timestamps_ms.size()) {
            throw DataError("session '" + s.session_id + "' has inconsistent column lengths");
        }
        out.push_back(std::move(s));
    }
    if (header) throw DataError("labeled-sessions file is empty");
    return out;
}

}  // namespace frustra
