#include <algorithm>
#include <sstream>

#include <gtest/gtest.h>

#include "frustra/sessionize.hpp"
#include "frustra/synth.hpp"

using namespace frustra;

namespace {

RawEvent ev(std::string sid, std::optional<ProductAction> a, std::int64_t t, std::string url = "u") {
    return RawEvent{std::move(sid), a ? "event_product" : "pageview", a, t, std::move(url)};
}

std::vector<int> ints(const SymbolSequence& s) {
    std::vector<int> out;
    for (const auto v : s) out.push_back(to_int(v));
    return out;
}

}  // namespace

TEST(Symbolize, MapsActionsToSymbols) {
    EXPECT_EQ(symbolize(std::nullopt), Symbol::view);
    EXPECT_EQ(symbolize(ProductAction::detail), Symbol::detail);
    EXPECT_EQ(symbolize(ProductAction::click), Symbol::click);
    EXPECT_EQ(symbolize(ProductAction::add), Symbol::add);
    EXPECT_EQ(symbolize(ProductAction::remove), Symbol::remove);
    EXPECT_EQ(symbolize(ProductAction::purchase), Symbol::purchase);
    EXPECT_EQ(symbolize(""), Symbol::view);
    EXPECT_EQ(symbolize("Detail"), Symbol::detail);
    EXPECT_THROW(symbolize("wishlist"), DomainError);
    EXPECT_THROW(symbol_from_int(7), DomainError);
    EXPECT_THROW(symbol_from_int(0), DomainError);
}

TEST(Sessionize, ExampleSessionSymbolizes) {
    const std::string id = "00007d15aeb741b3cdd873cb3933351d699cc320";
    const auto d = std::optional{ProductAction::detail};
    const std::optional<ProductAction> v;
    // Input deliberately out of time order.
    std::vector<RawEvent> events{ev(id, d, 700), ev(id, v, 100), ev(id, d, 300), ev(id, v, 200),
                                 ev(id, v, 400), ev(id, d, 500), ev(id, v, 600)};
    const auto sessions = sessionize(events);
    ASSERT_EQ(sessions.size(), 1u);
    EXPECT_EQ(ints(sessions[0].symbols), (std::vector<int>{1, 1, 2, 1, 2, 1, 2}));
    EXPECT_TRUE(std::is_sorted(sessions[0].timestamps_ms.begin(), sessions[0].timestamps_ms.end()));
}

TEST(Sessionize, SingletonSession) {
    const auto sessions = sessionize({ev("s", ProductAction::detail, 5)});
    ASSERT_EQ(sessions.size(), 1u);
    EXPECT_EQ(ints(sessions[0].symbols), (std::vector<int>{2}));
}

TEST(Sessionize, EqualTimestampsKeepInputOrder) {
    const auto sessions = sessionize({ev("s", ProductAction::add, 5, "a"), ev("s", ProductAction::remove, 5, "b"),
                                      ev("s", std::nullopt, 1, "c")});
    ASSERT_EQ(sessions.size(), 1u);
    EXPECT_EQ(ints(sessions[0].symbols), (std::vector<int>{1, 4, 5}));
    EXPECT_EQ(sessions[0].url_hashes, (std::vector<std::string>{"c", "a", "b"}));
}

TEST(Sessionize, SessionsOrderedByIdAndCountsPreserved) {
    const auto synth = generate(SynthMix::uniform(0.2), 200, 4);
    const auto sessions = sessionize(synth.events);
    EXPECT_EQ(sessions.size(), 200u);
    std::size_t total = 0;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        total += sessions[i].size();
        if (i > 0) {
            EXPECT_LT(sessions[i - 1].session_id, sessions[i].session_id);
        }
        EXPECT_EQ(sessions[i].size(), sessions[i].timestamps_ms.size());
        for (const auto s : sessions[i].symbols) {
            EXPECT_GE(to_int(s), 1);
            EXPECT_LE(to_int(s), 6);
        }
    }
    EXPECT_EQ(total, synth.events.size());
}

TEST(Sessionize, InterleavingSessionsDoesNotChangeOutput) {
    const auto synth = generate(SynthMix::uniform(0.2), 150, 8);
    // Reverse the session order but keep each session's rows in relative order.
    std::vector<RawEvent> shuffled;
    std::vector<std::string> order;
    for (const auto& e : synth.events) {
        if (order.empty() || order.back() != e.session_id) order.push_back(e.session_id);
    }
    std::reverse(order.begin(), order.end());
    for (const auto& id : order) {
        for (const auto& e : synth.events) {
            if (e.session_id == id) shuffled.push_back(e);
        }
    }
    EXPECT_EQ(sessionize(shuffled), sessionize(synth.events));
}

TEST(Sessionize, FileRoundTrip) {
    const auto sessions = sessionize(generate(SynthMix::uniform(0.5), 50, 2).events);
    std::ostringstream out;
    write_sessions(out, sessions);
    EXPECT_EQ(read_sessions(out.str()), sessions);
    EXPECT_THROW(read_sessions("bogus header\n"), DataError);
    EXPECT_THROW(read_sessions(std::string(sessions_header) + "\ns\t1 2\t5\tu\n"), DataError);
}
