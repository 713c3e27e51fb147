#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "frustra/error.hpp"
#include "frustra/text.hpp"

namespace frustra {

enum class ProductAction : std::uint8_t { detail, click, add, remove, purchase };

inline constexpr std::array<std::string_view, 5> product_action_names{"detail", "click", "add",
                                                                      "remove", "purchase"};

inline std::string_view to_string(ProductAction a) {
    return product_action_names[static_cast<std::size_t>(a)];
}

/// Case-insensitive lookup; nullopt for anything outside the five known actions.
inline std::optional<ProductAction> parse_product_action(std::string_view text) {
    const auto lowered = to_lower(trim(text));
    for (std::size_t i = 0; i < product_action_names.size(); ++i) {
        if (lowered == product_action_names[i]) return static_cast<ProductAction>(i);
    }
    return std::nullopt;
}

/// One clickstream row. An absent product action is a plain pageview.
struct RawEvent {
    std::string session_id;
    std::string event_type;
    std::optional<ProductAction> product_action;
    std::int64_t timestamp_ms = 0;
    std::string url_hash;

    friend bool operator==(const RawEvent&, const RawEvent&) = default;
};

/// Maps the five logical columns to header names in a particular export.
struct Schema {
    std::string session_id = "session_id_hash";
    std::string event_type = "event_type";
    std::string product_action = "product_action";
    std::string timestamp = "server_timestamp_epoch_ms";
    std::string url = "hashed_url";

    /// Keys are the logical column names, values the header names of the file.
    static Schema from_config(const KeyValueConfig& cfg) {
        Schema s;
        for (const auto& [key, value] : cfg.entries()) {
            if (key == "session_id_hash") s.session_id = value;
            else if (key == "event_type") s.event_type = value;
            else if (key == "product_action") s.product_action = value;
            else if (key == "server_timestamp_epoch_ms") s.timestamp = value;
            else if (key == "hashed_url") s.url = value;
            else throw ConfigError("unknown logical column '" + key + "' in schema");
        }
        return s;
    }
};

struct ParseStats {
    std::size_t rows_read = 0;
    std::size_t rows_accepted = 0;
    std::size_t rejected_field_count = 0;
    std::size_t rejected_bad_timestamp = 0;
    std::size_t rejected_missing_session_id = 0;
    std::size_t rejected_missing_url = 0;
    std::size_t rejected_unknown_action = 0;

    std::size_t rows_rejected() const {
        return rejected_field_count + rejected_bad_timestamp + rejected_missing_session_id +
               rejected_missing_url + rejected_unknown_action;
    }

    friend bool operator==(const ParseStats&, const ParseStats&) = default;

    void write(std::ostream& out) const {
        out << "rows_read=" << rows_read << '\n'
            << "rows_accepted=" << rows_accepted << '\n'
            << "rows_rejected=" << rows_rejected() << '\n'
            << "rejected_field_count=" << rejected_field_count << '\n'
            << "rejected_bad_timestamp=" << rejected_bad_timestamp << '\n'
            << "rejected_missing_session_id=" << rejected_missing_session_id << '\n'
            << "rejected_missing_url=" << rejected_missing_url << '\n'
            << "rejected_unknown_action=" << rejected_unknown_action << '\n';
    }
};

struct ParseResult {
    std::vector<RawEvent> events;
    ParseStats stats;
};

namespace detail {

/// Epoch milliseconds; a fractional part is truncated. Rejects non-positive values.
inline std::optional<std::int64_t> parse_timestamp_ms(std::string_view text) {
    text = trim(text);
    const auto dot = text.find('.');
    const auto whole = text.substr(0, dot);
    if (dot != std::string_view::npos) {
        const auto frac = text.substr(dot + 1);
        if (!std::all_of(frac.begin(), frac.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            return std::nullopt;
        }
    }
    const auto v = parse_number<std::int64_t>(whole);
    if (!v || *v <= 0) return std::nullopt;
    return v;
}

inline std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (trim(header[i]) == name) return i;
    }
    throw ConfigError("header is missing column '" + name + "'");
}

}  // namespace detail

/// Parses delimited text with a header row. Malformed rows are counted per
/// reason and skipped; only a missing header column aborts.
inline ParseResult parse_events(std::string_view source, const Schema& schema, char delimiter = ',') {
    ParseResult result;
    std::size_t pos = 0;
    auto next_line = [&](std::string_view& line) {
        if (pos >= source.size()) return false;
        auto end = source.find('\n', pos);
        if (end == std::string_view::npos) end = source.size();
        line = source.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = end + 1;
        return true;
    };

    std::string_view line;
    if (!next_line(line)) throw ConfigError("input has no header row");
    if (line.size() >= 3 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
    const auto header = split_delimited(line, delimiter);
    const std::size_t c_session = detail::column_index(header, schema.session_id);
    const std::size_t c_type = detail::column_index(header, schema.event_type);
    const std::size_t c_action = detail::column_index(header, schema.product_action);
    const std::size_t c_ts = detail::column_index(header, schema.timestamp);
    const std::size_t c_url = detail::column_index(header, schema.url);

    auto& st = result.stats;
    while (next_line(line)) {
        if (trim(line).empty()) continue;
        ++st.rows_read;
        const auto fields = split_delimited(line, delimiter);
        if (fields.size() != header.size()) {
            ++st.rejected_field_count;
            continue;
        }
        RawEvent ev;
        ev.session_id = std::string(trim(fields[c_session]));
        if (ev.session_id.empty()) {
            ++st.rejected_missing_session_id;
            continue;
        }
        ev.url_hash = std::string(trim(fields[c_url]));
        if (ev.url_hash.empty()) {
            ++st.rejected_missing_url;
            continue;
        }
        const auto ts = detail::parse_timestamp_ms(fields[c_ts]);
        if (!ts) {
            ++st.rejected_bad_timestamp;
            continue;
        }
        ev.timestamp_ms = *ts;
        const auto action_text = trim(fields[c_action]);
        if (!action_text.empty()) {
            ev.product_action = parse_product_action(action_text);
            if (!ev.product_action) {
                ++st.rejected_unknown_action;
                continue;
            }
        }
        ev.event_type = std::string(trim(fields[c_type]));
        result.events.push_back(std::move(ev));
        ++st.rows_accepted;
    }
    return result;
}

/// Canonical column order, default header names; parse_events reads it back unchanged.
inline void write_events(std::ostream& out, const std::vector<RawEvent>& events, char delimiter = ',') {
    const Schema s;
    out << s.session_id << delimiter << s.event_type << delimiter << s.product_action << delimiter
        << s.timestamp << delimiter << s.url << '\n';
    for (const auto& ev : events) {
        out << quote_field(ev.session_id, delimiter) << delimiter
            << quote_field(ev.event_type, delimiter) << delimiter
            << (ev.product_action ? to_string(*ev.product_action) : std::string_view{}) << delimiter
            << ev.timestamp_ms << delimiter << quote_field(ev.url_hash, delimiter) << '\n';
    }
}

struct CorpusSummary {
    std::size_t total_events = 0;
    std::size_t distinct_sessions = 0;
    std::int64_t min_timestamp_ms = 0;
    std::int64_t max_timestamp_ms = 0;
    /// Index 0 counts pageviews; 1..5 the product actions in declaration order.
    std::array<std::size_t, 6> action_histogram{};

    void write(std::ostream& out) const {
        out << "total_events=" << total_events << '\n'
            << "distinct_sessions=" << distinct_sessions << '\n'
            << "min_timestamp_ms=" << min_timestamp_ms << '\n'
            << "max_timestamp_ms=" << max_timestamp_ms << '\n'
            << "count_view=" << action_histogram[0] << '\n';
        for (std::size_t i = 0; i < product_action_names.size(); ++i) {
            out << "count_" << product_action_names[i] << '=' << action_histogram[i + 1] << '\n';
        }
    }
};

inline CorpusSummary validate_corpus(const std::vector<RawEvent>& events) {
    CorpusSummary s;
    if (events.empty()) return s;
    std::unordered_set<std::string_view> sessions;
    s.min_timestamp_ms = events.front().timestamp_ms;
    s.max_timestamp_ms = events.front().timestamp_ms;
    for (const auto& ev : events) {
        sessions.insert(ev.session_id);
        s.min_timestamp_ms = std::min(s.min_timestamp_ms, ev.timestamp_ms);
        s.max_timestamp_ms = std::max(s.max_timestamp_ms, ev.timestamp_ms);
        const std::size_t slot = ev.product_action ? static_cast<std::size_t>(*ev.product_action) + 1 : 0;
        ++s.action_histogram[slot];
    }
    s.total_events = events.size();
    s.distinct_sessions = sessions.size();
    return s;
}

}  // namespace frustra
