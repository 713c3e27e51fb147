#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "frustra/error.hpp"
#include "frustra/ingest.hpp"
#include "frustra/text.hpp"

namespace frustra {

/// Product-action alphabet. Ordinal order matters for visibility motifs.
enum class Symbol : std::uint8_t {
    view = 1,
    detail = 2,
    click = 3,
    add = 4,
    remove = 5,
    purchase = 6,
};

inline constexpr int symbol_count = 6;

constexpr int to_int(Symbol s) noexcept { return static_cast<int>(s); }

inline Symbol symbol_from_int(long v) {
    if (v < 1 || v > symbol_count) {
        throw DomainError("symbol value " + std::to_string(v) + " outside 1..6");
    }
    return static_cast<Symbol>(v);
}

constexpr Symbol symbolize(std::optional<ProductAction> action) noexcept {
    if (!action) return Symbol::view;
    switch (*action) {
        case ProductAction::detail: return Symbol::detail;
        case ProductAction::click: return Symbol::click;
        case ProductAction::add: return Symbol::add;
        case ProductAction::remove: return Symbol::remove;
        case ProductAction::purchase: return Symbol::purchase;
    }
    return Symbol::view;
}

/// Unknown action text is a domain error; ingest normally filters it out first.
inline Symbol symbolize(std::string_view action_text) {
    if (trim(action_text).empty()) return Symbol::view;
    const auto action = parse_product_action(action_text);
    if (!action) throw DomainError("unknown product action '" + std::string(action_text) + "'");
    return symbolize(action);
}

using SymbolSequence = std::vector<Symbol>;

/// Chronologically ordered events of one session, stored column-wise.
struct Session {
    std::string session_id;
    SymbolSequence symbols;
    std::vector<std::int64_t> timestamps_ms;
    std::vector<std::string> url_hashes;

    std::size_t size() const { return symbols.size(); }

    friend bool operator==(const Session&, const Session&) = default;
};

/// Groups by session id, stable-sorts each session by timestamp (ties keep
/// input order) and returns sessions ordered by id.
inline std::vector<Session> sessionize(const std::vector<RawEvent>& events) {
    std::unordered_map<std::string_view, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < events.size(); ++i) groups[events[i].session_id].push_back(i);

    std::vector<std::string_view> ids;
    ids.reserve(groups.size());
    for (const auto& [id, _] : groups) ids.push_back(id);
    std::sort(ids.begin(), ids.end());

    std::vector<Session> sessions;
    sessions.reserve(ids.size());
    for (const auto id : ids) {
        auto& idx = groups[id];
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return events[a].timestamp_ms < events[b].timestamp_ms;
        });
        Session s;
        s.session_id = std::string(id);
        s.symbols.reserve(idx.size());
        s.timestamps_ms.reserve(idx.size());
        s.url_hashes.reserve(idx.size());
        for (const auto i : idx) {
            s.symbols.push_back(symbolize(events[i].product_action));
            s.timestamps_ms.push_back(events[i].timestamp_ms);
            s.url_hashes.push_back(events[i].url_hash);
        }
        sessions.push_back(std::move(s));
    }
    return sessions;
}

template <class Range>
std::string join_space(const Range& values) {
    std::string out;
    bool first = true;
    for (const auto& v : values) {
        if (!first) out.push_back(' ');
        first = false;
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Symbol>) {
            out += std::to_string(to_int(v));
        } else if constexpr (std::is_arithmetic_v<std::decay_t<decltype(v)>>) {
            out += std::to_string(v);
        } else {
            out += v;
        }
    }
    return out;
}

inline SymbolSequence parse_symbols(std::string_view text) {
    SymbolSequence out;
    for (const auto tok : split_ws(text)) out.push_back(symbol_from_int(parse_or_throw<long>(tok, "symbol")));
    return out;
}

inline std::vector<std::int64_t> parse_timestamps(std::string_view text) {
    std::vector<std::int64_t> out;
    for (const auto tok : split_ws(text)) out.push_back(parse_or_throw<std::int64_t>(tok, "timestamp"));
    return out;
}

inline constexpr std::string_view sessions_header = "session_id\tsymbols\ttimestamps_ms\turl_hashes";

/// One tab-separated record per session; list columns are space-separated.
inline void write_sessions(std::ostream& out, const std::vector<Session>& sessions) {
    out << sessions_header << '\n';
    for (const auto& s : sessions) {
        out << s.session_id << '\t' << join_space(s.symbols) << '\t' << join_space(s.timestamps_ms)
            << '\t' << join_space(s.url_hashes) << '\n';
    }
}

inline std::vector<Session> read_sessions(std::string_view text) {
    std::vector<Session> sessions;
    std::size_t pos = 0;
    bool header = true;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (header) {
            if (line != sessions_header) throw DataError("not a sessions file (unexpected header)");
            header = false;
            continue;
        }
        if (line.empty()) continue;
        const auto f = split_delimited(line, '\t');
        if (f.size() != 4) throw DataError("sessions record with " + std::to_string(f.size()) + " fields");
        Session s;
        s.session_id = f[0];
        s.symbols = parse_symbols(f[1]);
        s.timestamps_ms = parse_timestamps(f[2]);
        for (const auto tok : split_ws(f[3])) s.url_hashes.emplace_back(tok);
        if (s.symbols.empty() || s.symbols.size() != s.timestamps_ms.size() ||
            s.symbols.size() != s.url_hashes.size()) {
            throw DataError("session '" + s.session_id + "' has inconsistent column lengths");
        }
        sessions.push_back(std::move(s));
    }
    if (header) throw DataError("sessions file is empty");
    return sessions;
}

}  // namespace frustra
