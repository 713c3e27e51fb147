#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "frustra/error.hpp"
#include "frustra/ingest.hpp"
#include "frustra/parallel.hpp"
#include "frustra/random.hpp"
#include "frustra/text.hpp"

namespace frustra {

enum class Archetype : std::uint8_t {
    buyer,
    browser,
    rage_clicker,
    u_turner,
    cart_churner,
    search_struggler,
    wanderer,
};

inline constexpr std::array<std::string_view, 7> archetype_names{
    "buyer", "browser", "rage_clicker", "u_turner", "cart_churner", "search_struggler", "wanderer"};

inline std::string_view to_string(Archetype a) { return archetype_names[static_cast<std::size_t>(a)]; }

/// Label the archetype is built to receive; near-miss variants are always 0.
inline int intended_label(Archetype a, bool near_miss) {
    if (near_miss) return 0;
    return (a == Archetype::buyer || a == Archetype::browser) ? 0 : 1;
}

struct ArchetypeSpec {
    Archetype archetype = Archetype::browser;
    double mix_weight = 0.0;
};

/// 2018-12-08 00:00:00 UTC.
inline constexpr std::int64_t default_synth_start_ms = 1'544'227'200'000;

struct SynthMix {
    std::vector<ArchetypeSpec> specs;
    /// Fraction of sessions rendered as the archetype's near-miss variant.
    double near_miss_rate = 0.0;
    std::int64_t start_ms = default_synth_start_ms;
    int window_days = 18;
    /// Bounds on background events per session.
    std::size_t min_background = 2;
    std::size_t max_background = 12;

    static SynthMix from_config(const KeyValueConfig& cfg) {
        SynthMix mix;
        for (const auto& [key, value] : cfg.entries()) {
            const auto it = std::find(archetype_names.begin(), archetype_names.end(), key);
            if (it != archetype_names.end()) {
                const auto w = parse_number<double>(value);
                if (!w) throw ConfigError("archetype weight for '" + key + "' is not a number");
                mix.specs.push_back({static_cast<Archetype>(it - archetype_names.begin()), *w});
            } else if (key != "near_miss_rate" && key != "start_ms" && key != "window_days" &&
                       key != "min_background" && key != "max_background") {
                throw ConfigError("unknown synth mix key '" + key + "'");
            }
        }
        mix.near_miss_rate = cfg.number_or<double>("near_miss_rate", mix.near_miss_rate);
        mix.start_ms = cfg.number_or<std::int64_t>("start_ms", mix.start_ms);
        mix.window_days = cfg.number_or<int>("window_days", mix.window_days);
        mix.min_background = cfg.number_or<std::size_t>("min_background", mix.min_background);
        mix.max_background = cfg.number_or<std::size_t>("max_background", mix.max_background);
        mix.validate();
        return mix;
    }

    /// Every archetype with equal weight.
    static SynthMix uniform(double near_miss_rate = 0.0) {
        SynthMix mix;
        for (std::size_t i = 0; i < archetype_names.size(); ++i) {
            mix.specs.push_back({static_cast<Archetype>(i), 1.0 / static_cast<double>(archetype_names.size())});
        }
        mix.near_miss_rate = near_miss_rate;
        return mix;
    }

    void validate() const {
        if (specs.empty()) throw ConfigError("synth mix has no archetypes");
        double total = 0.0;
        for (const auto& s : specs) {
            if (!(s.mix_weight >= 0.0)) throw ConfigError("archetype weights must be non-negative");
            total += s.mix_weight;
        }
        if (std::abs(total - 1.0) > 1e-6) throw ConfigError("archetype weights must sum to 1");
        if (!(near_miss_rate >= 0.0 && near_miss_rate <= 1.0)) throw ConfigError("near_miss_rate must be in [0, 1]");
        if (window_days <= 0) throw ConfigError("window_days must be positive");
        if (min_background < 2 || max_background < min_background || max_background > 20) {
            throw ConfigError("background event bounds must satisfy 2 <= min <= max <= 20");
        }
    }
};

struct ManifestEntry {
    std::string session_id;
    Archetype archetype = Archetype::browser;
    bool near_miss = false;
    int label = 0;
};

struct SynthOutput {
    std::vector<RawEvent> events;
    std::vector<ManifestEntry> manifest;
};

namespace detail {

/// Builds one session's events. Background events are pageviews or detail
/// views on fresh URLs spaced 3-30 s apart, so no rule fires by accident;
/// the archetype then inserts exactly the pattern it stands for.
class SessionBuilder {
public:
    SessionBuilder(Rng& rng, std::string session_id, std::int64_t start_ms, std::uint64_t url_seed)
        : rng_(rng), id_(std::move(session_id)), now_(start_ms), url_seed_(url_seed) {}

    std::string fresh_url() {
        const auto k = url_counter_++;
        return hex64(derive_seed(url_seed_, k)) + hex64(derive_seed(~url_seed_, k));
    }

    void emit(std::optional<ProductAction> action, const std::string& url, std::int64_t gap_ms) {
        if (!events_.empty()) now_ += gap_ms;
        events_.push_back(RawEvent{id_, action ? "event_product" : "pageview", action, now_, url});
    }

    std::int64_t normal_gap() { return rng_.between(3'000, 30'000); }

    void background(std::size_t count, std::size_t max_details = 20) {
        for (std::size_t i = 0; i < count; ++i) {
            const bool detail = details_ < max_details && rng_.bernoulli(0.4);
            if (detail) ++details_;
            emit(detail ? std::optional{ProductAction::detail} : std::nullopt, fresh_url(), normal_gap());
        }
    }

    void action(ProductAction a) { emit(a, fresh_url(), normal_gap()); }

    std::vector<RawEvent> take() { return std::move(events_); }
    std::size_t details() const { return details_; }
    std::int64_t now() const { return now_; }

private:
    Rng& rng_;
    std::string id_;
    std::int64_t now_;
    std::uint64_t url_seed_;
    std::uint64_t url_counter_ = 0;
    std::size_t details_ = 0;
    std::vector<RawEvent> events_;
};

inline std::string synth_session_id(std::uint64_t seed, std::uint64_t index) {
    const auto a = derive_seed(seed ^ 0x5E55101DULL, index);
    return (hex64(a) + hex64(splitmix64(a)) + hex64(splitmix64(a + 1))).substr(0, 40);
}

inline std::vector<RawEvent> generate_session(Archetype arch, bool near_miss, const SynthMix& mix, Rng& rng,
                                              const std::string& id, std::int64_t start_ms, std::uint64_t url_seed) {
    SessionBuilder b(rng, id, start_ms, url_seed);
    auto bg = [&] {
        return static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(mix.min_background),
                                                    static_cast<std::int64_t>(mix.max_background)));
    };
    switch (arch) {
        case Archetype::buyer: {
            b.background(bg());
            b.action(ProductAction::add);
            if (near_miss) {
                // Add then remove, but the purchase blocks cart churn.
                b.background(static_cast<std::size_t>(rng.between(0, 2)));
                b.action(ProductAction::remove);
                b.action(ProductAction::add);
            }
            b.background(static_cast<std::size_t>(rng.between(0, 3)));
            b.action(ProductAction::purchase);
            b.background(static_cast<std::size_t>(rng.between(0, 3)));
            break;
        }
        case Archetype::browser: {
            b.background(bg());
            if (near_miss) {
                // Two search clicks: one short of a search struggle.
                b.action(ProductAction::click);
                b.background(static_cast<std::size_t>(rng.between(0, 2)));
                b.action(ProductAction::click);
                b.background(1);
            }
            break;
        }
        case Archetype::rage_clicker: {
            b.background(bg() / 2 + 1);
            const std::string url = b.fresh_url();
            const bool clicks = !near_miss && rng.bernoulli(0.3);
            const std::optional<ProductAction> act =
                clicks ? std::optional{ProductAction::click}
                       : (rng.bernoulli(0.5) ? std::optional{ProductAction::detail} : std::nullopt);
            if (!near_miss) {
                const auto burst = static_cast<std::size_t>(rng.between(3, 5));
                const std::int64_t step = 2'000 / static_cast<std::int64_t>(burst - 1);
                b.emit(act, url, b.normal_gap());
                for (std::size_t i = 1; i < burst; ++i) b.emit(act, url, rng.between(50, step));
            } else if (rng.bernoulli(0.5)) {
                // Only two rapid repeats.
                b.emit(act, url, b.normal_gap());
                b.emit(act, url, rng.between(50, 1'000));
            } else {
                // Three repeats whose span exceeds the window.
                b.emit(act, url, b.normal_gap());
                b.emit(act, url, rng.between(1'001, 1'500));
                b.emit(act, url, rng.between(1'001, 1'500));
            }
            b.background(bg() / 2 + 1);
            break;
        }
        case Archetype::u_turner: {
            b.background(bg() / 2 + 1);
            const std::string a = b.fresh_url();
            b.emit(std::nullopt, a, b.normal_gap());
            const bool detail = rng.bernoulli(0.5);
            b.emit(detail ? std::optional{ProductAction::detail} : std::nullopt, b.fresh_url(), rng.between(300, 8'000));
            b.emit(std::nullopt, a, near_miss ? rng.between(2'001, 4'000) : rng.between(150, 2'000));
            b.background(bg() / 2 + 1);
            break;
        }
        case Archetype::cart_churner: {
            b.background(bg() / 2 + 1);
            const auto first = near_miss ? ProductAction::remove : ProductAction::add;
            const auto second = near_miss ? ProductAction::add : ProductAction::remove;
            b.action(first);
            b.background(static_cast<std::size_t>(rng.between(0, 3)));
            b.action(second);
            b.background(bg() / 2 + 1);
            break;
        }
        case Archetype::search_struggler: {
            b.background(bg() / 2 + 1);
            const auto clicks = near_miss ? 2 : rng.between(3, 6);
            for (std::int64_t i = 0; i < clicks; ++i) {
                b.action(ProductAction::click);
                b.background(static_cast<std::size_t>(rng.between(0, 1)));
            }
            b.background(1);
            break;
        }
        case Archetype::wanderer: {
            // Events spread over a target duration; near misses either stay
            // within 20 minutes or view only four products.
            const bool short_variant = near_miss && rng.bernoulli(0.5);
            const std::int64_t duration = short_variant ? rng.between(1'080'000, 1'200'000)
                                                        : rng.between(1'200'001, 2'400'000);
            const std::size_t details = (near_miss && !short_variant) ? 4 : static_cast<std::size_t>(rng.between(5, 9));
            const std::size_t views = static_cast<std::size_t>(rng.between(2, 8));
            std::vector<bool> is_detail(details + views, false);
            for (std::size_t i = 0; i < details; ++i) is_detail[i] = true;
            for (std::size_t i = is_detail.size(); i > 1; --i) {
                const auto j = static_cast<std::size_t>(rng.below(i));
                const bool tmp = is_detail[i - 1];
                is_detail[i - 1] = is_detail[j];
                is_detail[j] = tmp;
            }
            const auto n = is_detail.size();
            std::vector<std::int64_t> offsets(n);
            offsets[0] = 0;
            offsets[n - 1] = duration;
            for (std::size_t i = 1; i + 1 < n; ++i) offsets[i] = rng.between(1, duration - 1);
            std::sort(offsets.begin(), offsets.end());
            for (std::size_t i = 0; i < n; ++i) {
                b.emit(is_detail[i] ? std::optional{ProductAction::detail} : std::nullopt, b.fresh_url(),
                       i == 0 ? 0 : offsets[i] - offsets[i - 1]);
            }
            break;
        }
    }
    return b.take();
}

}  // namespace detail

/// Deterministic in (mix, n_sessions, seed) for any thread count: session i
/// draws everything from stream (seed, i). Sessions are emitted in index order.
inline SynthOutput generate(const SynthMix& mix, std::size_t n_sessions, std::uint64_t seed, unsigned threads = 1) {
    mix.validate();
    if (n_sessions == 0) throw ConfigError("n_sessions must be at least 1");
    const std::int64_t window_ms = std::int64_t{mix.window_days} * 86'400'000 - 3'600'000;
    std::vector<std::vector<RawEvent>> sessions(n_sessions);
    SynthOutput out;
    out.manifest.resize(n_sessions);
    parallel_for(n_sessions, threads, [&](std::size_t i) {
        Rng rng(derive_seed(seed, i));
        const double u = rng.uniform();
        double acc = 0.0;
        Archetype arch = mix.specs.back().archetype;
        for (const auto& s : mix.specs) {
            acc += s.mix_weight;
            if (u < acc) {
                arch = s.archetype;
                break;
            }
        }
        const bool near_miss = rng.bernoulli(mix.near_miss_rate);
        const auto id = detail::synth_session_id(seed, i);
        const std::int64_t start = mix.start_ms + rng.between(0, window_ms);
        sessions[i] = detail::generate_session(arch, near_miss, mix, rng, id, start, derive_seed(seed ^ 0xC0FFEEULL, i));
        out.manifest[i] = {id, arch, near_miss, intended_label(arch, near_miss)};
    });
    for (auto& events : sessions) {
        out.events.insert(out.events.end(), std::make_move_iterator(events.begin()),
                          std::make_move_iterator(events.end()));
    }
    return out;
}

inline void write_manifest(std::ostream& out, const std::vector<ManifestEntry>& manifest) {
    out << "session_id\tarchetype\tvariant\tintended_label\n";
    for (const auto& m : manifest) {
        out << m.session_id << '\t' << to_string(m.archetype) << '\t' << (m.near_miss ? "near_miss" : "full") << '\t'
            << m.label << '\n';
    }
}

}  // namespace frustra
