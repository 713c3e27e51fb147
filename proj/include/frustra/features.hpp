#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "frustra/error.hpp"
#include "frustra/labeling.hpp"
#include "frustra/parallel.hpp"
#include "frustra/sessionize.hpp"
#include "frustra/text.hpp"

namespace frustra {

inline constexpr std::size_t unigram_size = 5;
inline constexpr std::size_t bigram_size = 25;
inline constexpr std::size_t motif_count = 6;
inline constexpr std::size_t feature_count = unigram_size + bigram_size + motif_count + 1 + 4;

/// Layout: 5 unigram, 25 bigram (row-major over first symbol), z1..z6, hz,
/// hour_sin, hour_cos, dow_sin, dow_cos.
using FeatureVector = std::array<double, feature_count>;

inline const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n{"p_view", "p_detail", "p_click", "p_add", "p_remove"};
        for (int a = 1; a <= 5; ++a) {
            for (int b = 1; b <= 5; ++b) n.push_back("p_" + std::to_string(a) + std::to_string(b));
        }
        for (int z = 1; z <= 6; ++z) n.push_back("z" + std::to_string(z));
        for (const char* c : {"hz", "hour_sin", "hour_cos", "dow_sin", "dow_cos"}) n.emplace_back(c);
        return n;
    }();
    return names;
}

/// Identifies a column ordering; models refuse matrices with another tag.
inline std::string columns_tag(const std::vector<std::string>& names) {
    std::string joined;
    for (const auto& n : names) joined += n + ",";
    return "v1-" + hex64(fnv1a(joined));
}

inline std::string feature_tag() { return columns_tag(feature_names()); }

namespace detail {

inline std::size_t symbol_slot(Symbol s) {
    const int v = to_int(s);
    if (v < 1 || v > 5) throw DomainError("symbol " + std::to_string(v) + " is not allowed in a truncated sequence");
    return static_cast<std::size_t>(v - 1);
}

}  // namespace detail

inline std::array<double, unigram_size> unigram_features(std::span<const Symbol> symbols) {
    if (symbols.empty()) throw DomainError("unigram features of an empty sequence");
    std::array<std::size_t, unigram_size> counts{};
    for (const auto s : symbols) ++counts[detail::symbol_slot(s)];
    std::array<double, unigram_size> p{};
    const auto n = static_cast<double>(symbols.size());
    for (std::size_t i = 0; i < unigram_size; ++i) p[i] = static_cast<double>(counts[i]) / n;
    return p;
}

/// Adjacent-pair frequencies over the length-1 pairs; index 5*(a-1)+(b-1).
inline std::array<double, bigram_size> bigram_features(std::span<const Symbol> symbols) {
    if (symbols.size() < 2) throw DomainError("bigram features need at least two symbols");
    std::array<std::size_t, bigram_size> counts{};
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        ++counts[5 * detail::symbol_slot(symbols[i]) + detail::symbol_slot(symbols[i + 1])];
    }
    std::array<double, bigram_size> p{};
    const auto pairs = static_cast<double>(symbols.size() - 1);
    for (std::size_t i = 0; i < bigram_size; ++i) p[i] = static_cast<double>(counts[i]) / pairs;
    return p;
}

/// Horizontal-visibility edges beyond the always-present chain 0-1-2-3.
struct VisibilityEdges {
    bool e02 = false;
    bool e13 = false;
    bool e03 = false;

    friend bool operator==(const VisibilityEdges&, const VisibilityEdges&) = default;
};

enum class Motif : std::uint8_t { z1 = 1, z2, z3, z4, z5, z6 };

/// Equal heights block visibility: comparisons are strict.
template <class T>
constexpr VisibilityEdges visibility_edges(const T& x0, const T& x1, const T& x2, const T& x3) {
    auto lower = [](const T& a, const T& b) { return a < b ? a : b; };
    return VisibilityEdges{
        .e02 = x1 < lower(x0, x2),
        .e13 = x2 < lower(x1, x3),
        .e03 = x1 < lower(x0, x3) && x2 < lower(x0, x3),
    };
}

/// {} -> z1, {e02} -> z2, {e13} -> z3, {e02,e03} -> z4, {e13,e03} -> z5, {e03} -> z6.
/// Visibility makes {e02,e13} and any triple impossible.
constexpr Motif motif_from_edges(VisibilityEdges e) {
    if (e.e03) {
        if (e.e02) return Motif::z4;
        if (e.e13) return Motif::z5;
        return Motif::z6;
    }
    if (e.e02) return Motif::z2;
    if (e.e13) return Motif::z3;
    return Motif::z1;
}

template <class T>
constexpr Motif classify_motif(const T& x0, const T& x1, const T& x2, const T& x3) {
    return motif_from_edges(visibility_edges(x0, x1, x2, x3));
}

struct MotifProfile {
    std::array<double, motif_count> z{};
    double entropy = 0.0;
};

/// Shannon entropy in nats of a probability vector; zero cells contribute nothing.
template <std::size_t N>
double shannon_entropy(const std::array<double, N>& p) {
    double h = 0.0;
    for (const double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

/// Width-4 sliding window with stride 1. Sequences shorter than 4 give an
/// all-zero profile with zero entropy.
template <class T>
MotifProfile motif_profile(std::span<const T> values) {
    MotifProfile out;
    if (values.size() < 4) return out;
    std::array<std::size_t, motif_count> counts{};
    for (std::size_t i = 0; i + 3 < values.size(); ++i) {
        const auto m = classify_motif(values[i], values[i + 1], values[i + 2], values[i + 3]);
        ++counts[static_cast<std::size_t>(m) - 1];
    }
    const auto windows = static_cast<double>(values.size() - 3);
    for (std::size_t k = 0; k < motif_count; ++k) out.z[k] = static_cast<double>(counts[k]) / windows;
    out.entropy = shannon_entropy(out.z);
    return out;
}

inline MotifProfile motif_profile(std::span<const Symbol> symbols) {
    std::vector<int> values(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) values[i] = to_int(symbols[i]);
    return motif_profile(std::span<const int>(values));
}

struct CyclicalFeatures {
    double hour_sin = 0.0;
    double hour_cos = 1.0;
    double dow_sin = 0.0;
    double dow_cos = 1.0;
};

/// Local hour h in 0..23 and weekday d in 0..6 (Monday = 0) at the given UTC offset.
inline CyclicalFeatures cyclical_features(std::int64_t first_event_ms, int timezone_offset_minutes = 0) {
    using namespace std::chrono;
    const sys_time<milliseconds> t{milliseconds{first_event_ms + std::int64_t{timezone_offset_minutes} * 60'000}};
    const auto day = floor<days>(t);
    const auto h = duration_cast<hours>(t - day).count();
    const auto d = weekday{day}.iso_encoding() - 1;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    return CyclicalFeatures{
        .hour_sin = std::sin(two_pi * static_cast<double>(h) / 24.0),
        .hour_cos = std::cos(two_pi * static_cast<double>(h) / 24.0),
        .dow_sin = std::sin(two_pi * static_cast<double>(d) / 7.0),
        .dow_cos = std::cos(two_pi * static_cast<double>(d) / 7.0),
    };
}

inline FeatureVector featurize(const LabeledSession& s, int timezone_offset_minutes = 0) {
    const std::span<const Symbol> seq(s.truncated_symbols);
    FeatureVector v{};
    std::size_t k = 0;
    for (const double p : unigram_features(seq)) v[k++] = p;
    for (const double p : bigram_features(seq)) v[k++] = p;
    const auto motifs = motif_profile(seq);
    for (const double z : motifs.z) v[k++] = z;
    v[k++] = motifs.entropy;
    const auto c = cyclical_features(s.first_event_ms, timezone_offset_minutes);
    v[k++] = c.hour_sin;
    v[k++] = c.hour_cos;
    v[k++] = c.dow_sin;
    v[k++] = c.dow_cos;
    return v;
}

/// Row-major numeric table with a session id and a 0/1 label per row.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    explicit FeatureMatrix(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    std::size_t rows() const { return labels_.size(); }
    std::size_t cols() const { return columns_.size(); }
    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<int>& labels() const { return labels_; }
    std::span<const double> values() const { return values_; }

    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }
    std::span<double> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
    double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    const std::string& id(std::size_t r) const { return ids_[r]; }
    int label(std::size_t r) const { return labels_[r]; }

    void add_row(std::string id, int label, std::span<const double> values) {
        if (values.size() != cols()) throw DomainError("row width does not match column count");
        ids_.push_back(std::move(id));
        labels_.push_back(label);
        values_.insert(values_.end(), values.begin(), values.end());
    }

    FeatureMatrix select(std::span<const std::size_t> rows) const {
        FeatureMatrix out(columns_);
        for (const auto r : rows) out.add_row(ids_[r], labels_[r], row(r));
        return out;
    }

    /// Synthetic matrices for tests and demos get placeholder ids.
    static FeatureMatrix from_rows(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels) {
        if (rows.size() != labels.size()) throw DomainError("row and label counts differ");
        const std::size_t width = rows.empty() ? 0 : rows.front().size();
        std::vector<std::string> cols;
        for (std::size_t c = 0; c < width; ++c) cols.push_back("x" + std::to_string(c));
        FeatureMatrix m(std::move(cols));
        for (std::size_t r = 0; r < rows.size(); ++r) m.add_row("r" + std::to_string(r), labels[r], rows[r]);
        return m;
    }

private:
    std::vector<std::string> columns_;
    std::vector<std::string> ids_;
    std::vector<int> labels_;
    std::vector<double> values_;
};

inline FeatureMatrix featurize_all(const std::vector<LabeledSession>& sessions, int timezone_offset_minutes = 0,
                                   unsigned threads = 1) {
    std::vector<FeatureVector> vecs(sessions.size());
    parallel_for(sessions.size(), threads,
                 [&](std::size_t i) { vecs[i] = featurize(sessions[i], timezone_offset_minutes); });
    FeatureMatrix m(feature_names());
    for (std::size_t i = 0; i < sessions.size(); ++i) m.add_row(sessions[i].session_id, sessions[i].label, vecs[i]);
    return m;
}

/// Comma-separated: session_id, label, then one column per feature.
inline void write_matrix(std::ostream& out, const FeatureMatrix& m) {
    out << "session_id,label";
    for (const auto& c : m.columns()) out << ',' << c;
    out << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out << quote_field(m.id(r), ',') << ',' << m.label(r);
        for (const double v : m.row(r)) out << ',' << format_double(v);
        out << '\n';
    }
}

inline FeatureMatrix read_matrix(std::string_view text) {
    std::size_t pos = 0;
    auto next_line = [&](std::string_view& line) {
        while (pos < text.size()) {
            auto end = text.find('\n', pos);
            if (end == std::string_view::npos) end = text.size();
            line = text.substr(pos, end - pos);
            pos = end + 1;
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            if (!line.empty()) return true;
        }
        return false;
    };
    std::string_view line;
    if (!next_line(line)) throw DataError("feature matrix is empty");
    auto header = split_delimited(line, ',');
    if (header.size() < 2 || header[0] != "session_id" || header[1] != "label") {
        throw DataError("feature matrix header must start with session_id,label");
    }
    FeatureMatrix m(std::vector<std::string>(header.begin() + 2, header.end()));
    std::vector<double> row(m.cols());
    while (next_line(line)) {
        const auto f = split_delimited(line, ',');
        if (f.size() != header.size()) throw DataError("feature matrix row has wrong field count");
        const int label = parse_or_throw<int>(f[1], "label");
        if (label != 0 && label != 1) throw DataError("label must be 0 or 1");
        for (std::size_t c = 0; c < m.cols(); ++c) row[c] = parse_or_throw<double>(f[c + 2], "feature value");
        m.add_row(f[0], label, row);
    }
    return m;
}

}  // namespace frustra
