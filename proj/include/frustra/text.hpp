#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "frustra/error.hpp"

namespace frustra {

inline constexpr std::string_view tool_version = "0.3.1";

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

/// Splits one delimited line. Double-quoted fields may contain the delimiter;
/// a doubled quote inside a quoted field is a literal quote.
inline std::vector<std::string> split_delimited(std::string_view line, char delim) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == delim) {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

inline std::string quote_field(std::string_view field, char delim) {
    if (field.find_first_of(std::string{delim, '"', '\n', '\r'}) == std::string_view::npos) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        const std::size_t start = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
        if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    T value{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

template <class T>
T parse_or_throw(std::string_view s, std::string_view what) {
    if (auto v = parse_number<T>(s)) return *v;
    throw DataError("cannot parse " + std::string(what) + " from '" + std::string(s) + "'");
}

/// Shortest text that round-trips the double exactly.
inline std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string format_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Reads a whole file; transparently inflates gzip input.
inline std::string read_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("cannot open '" + path.string() + "'");
    if (path.extension() == ".gz") {
        gzFile gz = gzopen(path.c_str(), "rb");
        if (!gz) throw IoError("cannot open '" + path.string() + "'");
        std::string out;
        char buf[1 << 16];
        int n = 0;
        while ((n = gzread(gz, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
        const bool failed = n < 0;
        gzclose(gz);
        if (failed) throw IoError("corrupt gzip stream in '" + path.string() + "'");
        return out;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes through `<path>.partial` and renames on commit, so an interrupted
/// stage leaves a visibly partial file instead of a truncated final one.
class AtomicWriter {
public:
    explicit AtomicWriter(std::filesystem::path path)
        : path_(std::move(path)), partial_(path_.string() + ".partial") {
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
        out_.open(partial_, std::ios::binary | std::ios::trunc);
        if (!out_) throw IoError("cannot write '" + partial_.string() + "'");
    }
    AtomicWriter(const AtomicWriter&) = delete;
    AtomicWriter& operator=(const AtomicWriter&) = delete;

    std::ostream& stream() { return out_; }

    void commit() {
        out_.close();
        if (!out_) throw IoError("write failed for '" + partial_.string() + "'");
        std::filesystem::rename(partial_, path_);
        committed_ = true;
    }

    ~AtomicWriter() {
        if (out_.is_open()) out_.close();
    }

    bool committed() const { return committed_; }

private:
    std::filesystem::path path_;
    std::filesystem::path partial_;
    std::ofstream out_;
    bool committed_ = false;
};

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    AtomicWriter w(path);
    w.stream() << content;
    w.commit();
}

/// Ordered `key=value` configuration. Blank lines and `#` comments are ignored.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::string_view text, std::string_view origin = "config") {
        KeyValueConfig cfg;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const auto end = std::min(text.find('\n', pos), text.size());
            const auto line = trim(text.substr(pos, end - pos));
            ++line_no;
            pos = end + 1;
            if (line.empty() || line.front() == '#') {
                if (end == text.size()) break;
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) {
                throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) +
                                  ": expected key=value");
            }
            cfg.set(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
            if (end == text.size()) break;
        }
        return cfg;
    }

    static KeyValueConfig load(const std::filesystem::path& path) {
        if (!std::filesystem::exists(path)) {
            throw ConfigError("config file '" + path.string() + "' does not exist");
        }
        return parse(read_file(path), path.string());
    }

    void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }

    bool contains(const std::string& key) const { return values_.count(key) != 0; }

    std::optional<std::string> get(const std::string& key) const {
        if (auto it = values_.find(key); it != values_.end()) return it->second;
        return std::nullopt;
    }

    std::string get_or(const std::string& key, std::string fallback) const {
        return get(key).value_or(std::move(fallback));
    }

    template <class T>
    T number_or(const std::string& key, T fallback) const {
        const auto v = get(key);
        if (!v) return fallback;
        if (auto n = parse_number<T>(*v)) return *n;
        throw ConfigError("config key '" + key + "' has non-numeric value '" + *v + "'");
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

    /// Keys starting with `prefix`, with the prefix removed.
    KeyValueConfig section(std::string_view prefix) const {
        KeyValueConfig out;
        for (const auto& [k, v] : values_) {
            if (k.size() > prefix.size() && std::string_view(k).substr(0, prefix.size()) == prefix) {
                out.set(k.substr(prefix.size()), v);
            }
        }
        return out;
    }

    /// Throws ConfigError for any key not in `known`.
    void require_known(std::initializer_list<std::string_view> known, std::string_view what) const {
        for (const auto& [k, _] : values_) {
            bool ok = false;
            for (const auto name : known) ok = ok || k == name;
            if (!ok) throw ConfigError("unknown " + std::string(what) + " key '" + k + "'");
        }
    }

    /// Canonical text; its hash identifies the configuration that produced an artifact.
    std::string canonical() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
        return out;
    }

    std::string hash() const { return hex64(fnv1a(canonical())); }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace frustra
