#include <sstream>

#include <gtest/gtest.h>

#include "frustra/labeling.hpp"
#include "frustra/synth.hpp"
#include "oracles.hpp"

using namespace frustra;

namespace {

Session make(std::vector<int> symbols, std::vector<std::int64_t> times = {}, std::vector<std::string> urls = {}) {
    Session s;
    s.session_id = "s";
    if (times.empty()) {
        for (std::size_t i = 0; i < symbols.size(); ++i) times.push_back(static_cast<std::int64_t>(i) * 10'000);
    }
    if (urls.empty()) {
        for (std::size_t i = 0; i < symbols.size(); ++i) urls.push_back("u" + std::to_string(i));
    }
    for (const int v : symbols) s.symbols.push_back(symbol_from_int(v));
    s.timestamps_ms = std::move(times);
    s.url_hashes = std::move(urls);
    return s;
}

std::vector<int> ints(const SymbolSequence& s) {
    std::vector<int> out;
    for (const auto v : s) out.push_back(to_int(v));
    return out;
}

std::vector<RawEvent> events_of(const Session& s) {
    std::vector<RawEvent> out;
    static const std::optional<ProductAction> actions[] = {std::nullopt,         ProductAction::detail,
                                                           ProductAction::click, ProductAction::add,
                                                           ProductAction::remove, ProductAction::purchase};
    for (std::size_t i = 0; i < s.size(); ++i) {
        out.push_back(RawEvent{s.session_id, "x", actions[to_int(s.symbols[i]) - 1], s.timestamps_ms[i], s.url_hashes[i]});
    }
    return out;
}

}  // namespace

TEST(RageBursts, ThreeWithinWindow) {
    EXPECT_EQ(detect_rage_bursts(make({3, 3, 3}, {0, 500, 1500}, {"a", "a", "a"})), 1u);
}

TEST(RageBursts, SpanTooLong) {
    EXPECT_EQ(detect_rage_bursts(make({3, 3, 3}, {0, 1500, 3000}, {"a", "a", "a"})), 0u);
}

TEST(RageBursts, TwoDisjointBursts) {
    EXPECT_EQ(detect_rage_bursts(make({3, 3, 3, 3, 3, 3}, {0, 100, 200, 5000, 5100, 5200},
                                      {"a", "a", "a", "a", "a", "a"})),
              2u);
}

TEST(RageBursts, WindowIsInclusiveAndKeyedOnUrlAndSymbol) {
    EXPECT_EQ(detect_rage_bursts(make({1, 1, 1}, {0, 1000, 2000}, {"a", "a", "a"})), 1u);
    EXPECT_EQ(detect_rage_bursts(make({1, 1, 1}, {0, 1000, 2001}, {"a", "a", "a"})), 0u);
    EXPECT_EQ(detect_rage_bursts(make({1, 2, 1}, {0, 100, 200}, {"a", "a", "a"})), 0u);
    EXPECT_EQ(detect_rage_bursts(make({1, 1, 1}, {0, 100, 200}, {"a", "b", "a"})), 0u);
    // Interleaved with other events still counts.
    EXPECT_EQ(detect_rage_bursts(make({2, 1, 2, 1, 2}, {0, 10, 20, 30, 40}, {"a", "x", "a", "y", "a"})), 1u);
}

TEST(RageBursts, GreedyConsumptionDoesNotDoubleCount) {
    // Five events within 2 s form one burst, not three overlapping ones.
    EXPECT_EQ(detect_rage_bursts(make({1, 1, 1, 1, 1}, {0, 400, 800, 1200, 1600}, {"a", "a", "a", "a", "a"})), 1u);
    // 0,1000,2000 take the first window; 2500,3000 are then too few.
    EXPECT_EQ(detect_rage_bursts(make({1, 1, 1, 1, 1}, {0, 1000, 2000, 2500, 3000}, {"a", "a", "a", "a", "a"})), 1u);
}

TEST(UTurns, SimpleReturn) {
    EXPECT_EQ(detect_u_turns(make({1, 1, 1}, {0, 5000, 6000}, {"A", "B", "A"})), 1u);
}

TEST(UTurns, CartActionInBetweenBlocks) {
    EXPECT_EQ(detect_u_turns(make({1, 4, 1}, {0, 5000, 6000}, {"A", "B", "A"})), 0u);
    EXPECT_EQ(detect_u_turns(make({1, 5, 1}, {0, 5000, 6000}, {"A", "B", "A"})), 0u);
    EXPECT_EQ(detect_u_turns(make({1, 6, 1}, {0, 5000, 6000}, {"A", "B", "A"})), 0u);
    EXPECT_EQ(detect_u_turns(make({1, 3, 1}, {0, 5000, 6000}, {"A", "B", "A"})), 1u);
}

TEST(UTurns, OverlappingPatternsEachCount) {
    EXPECT_EQ(detect_u_turns(make({1, 1, 1, 1, 1}, {0, 500, 1000, 1500, 2000}, {"A", "B", "A", "B", "A"})), 3u);
}

TEST(UTurns, ReturnLegTiming) {
    EXPECT_EQ(detect_u_turns(make({1, 1, 1}, {0, 100, 2100}, {"A", "B", "A"})), 1u);
    EXPECT_EQ(detect_u_turns(make({1, 1, 1}, {0, 100, 2101}, {"A", "B", "A"})), 0u);
    EXPECT_EQ(detect_u_turns(make({1, 1, 1}, {0, 100, 200}, {"A", "A", "A"})), 0u);
}

TEST(CartChurn, Examples) {
    EXPECT_TRUE(detect_cart_churn(make({1, 4, 5, 1})));
    EXPECT_FALSE(detect_cart_churn(make({1, 4, 5, 6})));
    EXPECT_FALSE(detect_cart_churn(make({1, 5, 4, 1})));
    EXPECT_FALSE(detect_cart_churn(make({6, 4, 5})));
}

TEST(SearchStruggle, Examples) {
    EXPECT_TRUE(detect_search_struggle(make({3, 3, 3, 1})));
    EXPECT_FALSE(detect_search_struggle(make({3, 3, 3, 4})));
    EXPECT_FALSE(detect_search_struggle(make({3, 3, 1, 1})));
    EXPECT_FALSE(detect_search_struggle(make({3, 3, 3, 6})));
}

TEST(LongWander, Examples) {
    const std::int64_t minute = 60'000;
    EXPECT_TRUE(detect_long_wander(make({2, 2, 2, 2, 2}, {0, minute, 2 * minute, 3 * minute, 25 * minute})));
    EXPECT_FALSE(detect_long_wander(make({2, 2, 4, 2, 2, 2}, {0, minute, 2 * minute, 3 * minute, 4 * minute, 25 * minute})));
    std::vector<std::int64_t> ten(10);
    for (std::size_t i = 0; i < 10; ++i) ten[i] = static_cast<std::int64_t>(i) * minute;
    EXPECT_FALSE(detect_long_wander(make({2, 2, 2, 2, 2, 2, 2, 2, 2, 2}, ten)));
    // Exactly 20 minutes is not "exceeds".
    EXPECT_FALSE(detect_long_wander(make({2, 2, 2, 2, 2}, {0, 1, 2, 3, 20 * minute})));
    EXPECT_TRUE(detect_long_wander(make({2, 2, 2, 2, 2}, {0, 1, 2, 3, 20 * minute + 1})));
}

TEST(LabelAndTruncate, TruncatesBeforeFirstPurchase) {
    EXPECT_EQ(ints(label_and_truncate(make({1, 2, 4, 6, 1})).truncated_symbols), (std::vector<int>{1, 2, 4}));
    EXPECT_EQ(ints(label_and_truncate(make({1, 2, 2})).truncated_symbols), (std::vector<int>{1, 2, 2}));
    EXPECT_TRUE(label_and_truncate(make({6, 1, 2})).truncated_symbols.empty());
    const auto l = label_and_truncate(make({1, 2, 4, 6, 1}, {10, 20, 30, 40, 50}));
    EXPECT_EQ(l.truncated_timestamps_ms, (std::vector<std::int64_t>{10, 20, 30}));
    EXPECT_EQ(l.first_event_ms, 10);
}

TEST(LabelAndTruncate, SignalsUseFullSession) {
    // The rage burst sits after the purchase and still labels the session.
    const auto l = label_and_truncate(make({1, 2, 6, 1, 1, 1}, {0, 10'000, 20'000, 30'000, 30'100, 30'200},
                                           {"a", "b", "c", "d", "d", "d"}));
    EXPECT_EQ(l.label, 1);
    EXPECT_EQ(l.signals.rage_bursts, 1u);
    EXPECT_EQ(ints(l.truncated_symbols), (std::vector<int>{1, 2}));
}

TEST(LabelAndTruncate, PurchaseExcludesChurnSearchWander) {
    const std::int64_t minute = 60'000;
    const auto l = label_and_truncate(
        make({4, 5, 3, 3, 3, 2, 2, 2, 2, 2, 6}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 30 * minute}));
    EXPECT_FALSE(l.signals.cart_churn);
    EXPECT_FALSE(l.signals.search_struggle);
    EXPECT_FALSE(l.signals.long_wander);
    EXPECT_EQ(l.label, 0);
}

TEST(Filter, LengthBounds) {
    std::vector<LabeledSession> in(4);
    in[0].truncated_symbols.assign(1, Symbol::view);
    in[1].truncated_symbols.assign(1001, Symbol::view);
    in[2].truncated_symbols.assign(2, Symbol::view);
    in[2].label = 1;
    // in[3] is empty after truncation.
    const auto r = preprocess_filter(in);
    ASSERT_EQ(r.sessions.size(), 1u);
    EXPECT_EQ(r.sessions[0].truncated_symbols.size(), 2u);
    EXPECT_EQ(r.stats.dropped_too_short, 1u);
    EXPECT_EQ(r.stats.dropped_too_long, 1u);
    EXPECT_EQ(r.stats.dropped_empty_after_truncation, 1u);
    EXPECT_EQ(r.stats.kept_frustrated, 1u);
    std::vector<LabeledSession> edge(1);
    edge[0].truncated_symbols.assign(1000, Symbol::detail);
    EXPECT_EQ(preprocess_filter(edge).sessions.size(), 1u);
}

TEST(RuleConfig, ThresholdsAreConfigurable) {
    const auto rules = RuleConfig::from_config(KeyValueConfig::parse("search_min_clicks=2\nrage_window_ms=5000"));
    EXPECT_TRUE(detect_search_struggle(make({3, 3, 1}), rules));
    EXPECT_EQ(detect_rage_bursts(make({1, 1, 1}, {0, 1500, 3000}, {"a", "a", "a"}), rules), 1u);
    EXPECT_THROW(RuleConfig::from_config(KeyValueConfig::parse("rage_clicks=3")), ConfigError);
    EXPECT_THROW(RuleConfig::from_config(KeyValueConfig::parse("min_length=5\nmax_length=4")), ConfigError);
}

TEST(Labeling, MatchesBruteForceOnRandomSessions) {
    // Small URL alphabet and short gaps so every rule fires regularly.
    Rng rng(77);
    std::size_t positives = 0;
    for (int n = 0; n < 3000; ++n) {
        const auto len = static_cast<std::size_t>(rng.between(1, 40));
        std::vector<int> sym(len);
        std::vector<std::int64_t> t(len);
        std::vector<std::string> url(len);
        std::int64_t now = 1'000'000;
        const bool slow = rng.bernoulli(0.2);
        for (std::size_t i = 0; i < len; ++i) {
            const double r = rng.uniform();
            sym[i] = r < 0.35 ? 1 : r < 0.65 ? 2 : r < 0.8 ? 3 : r < 0.88 ? 4 : r < 0.95 ? 5 : 6;
            now += slow ? rng.between(0, 120'000) : rng.between(0, 1'500);
            t[i] = now;
            url[i] = std::string(1, static_cast<char>('a' + rng.between(0, 3)));
        }
        const auto s = make(sym, t, url);
        const auto got = label_and_truncate(s);
        const auto want = oracle::label_session(events_of(s));
        ASSERT_EQ(got.signals.rage_bursts, want.rage) << n;
        ASSERT_EQ(got.signals.u_turns, want.u_turns) << n;
        ASSERT_EQ(got.signals.cart_churn, want.churn) << n;
        ASSERT_EQ(got.signals.search_struggle, want.search) << n;
        ASSERT_EQ(got.signals.long_wander, want.wander) << n;
        ASSERT_EQ(got.label, want.label) << n;
        ASSERT_EQ(ints(got.truncated_symbols), want.truncated) << n;
        positives += static_cast<std::size_t>(got.label);
    }
    EXPECT_GT(positives, 300u);
    EXPECT_LT(positives, 2900u);
}

TEST(Labeling, FileRoundTrip) {
    const auto synth = generate(SynthMix::uniform(0.3), 100, 12);
    std::vector<LabeledSession> labeled;
    for (const auto& s : sessionize(synth.events)) labeled.push_back(label_and_truncate(s));
    std::ostringstream out;
    write_labeled(out, labeled);
    EXPECT_EQ(read_labeled(out.str()), labeled);
    EXPECT_THROW(read_labeled("nope\n"), DataError);
}
