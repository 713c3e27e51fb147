#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "frustra/features.hpp"
#include "oracles.hpp"

using namespace frustra;

namespace {

SymbolSequence seq(std::initializer_list<int> v) {
    SymbolSequence s;
    for (const int x : v) s.push_back(symbol_from_int(x));
    return s;
}

SymbolSequence seq(const std::vector<int>& v) {
    SymbolSequence s;
    for (const int x : v) s.push_back(symbol_from_int(x));
    return s;
}

// Monday 2018-12-10 00:00:00 UTC.
constexpr std::int64_t monday_ms = 1'544'400'000'000;

}  // namespace

TEST(Unigram, Examples) {
    const auto a = unigram_features(seq({1, 2, 2, 3}));
    EXPECT_EQ(a, (std::array<double, 5>{0.25, 0.5, 0.25, 0, 0}));
    EXPECT_EQ(unigram_features(seq({4, 4})), (std::array<double, 5>{0, 0, 0, 1, 0}));
    for (const double p : unigram_features(seq({1, 2, 3, 4, 5}))) EXPECT_EQ(p, 0.2);
    EXPECT_THROW(unigram_features(SymbolSequence{}), DomainError);
    EXPECT_THROW(unigram_features(seq({1, 6})), DomainError);
}

TEST(Bigram, Examples) {
    const auto b = bigram_features(seq({1, 2, 2, 3}));
    for (std::size_t i = 0; i < 25; ++i) {
        const bool hit = i == 5 * 0 + 1 || i == 5 * 1 + 1 || i == 5 * 1 + 2;
        EXPECT_EQ(b[i], hit ? 1.0 / 3.0 : 0.0) << i;
    }
    const auto one = bigram_features(seq({1, 1}));
    EXPECT_EQ(one[0], 1.0);
    EXPECT_EQ(std::accumulate(one.begin(), one.end(), 0.0), 1.0);
    const auto alt = bigram_features(seq({2, 1, 2, 1}));
    EXPECT_EQ(alt[5 * 1 + 0], 2.0 / 3.0);
    EXPECT_EQ(alt[5 * 0 + 1], 1.0 / 3.0);
    EXPECT_THROW(bigram_features(seq({1})), DomainError);
}

TEST(Motif, Examples) {
    EXPECT_EQ(classify_motif(1, 1, 1, 1), Motif::z1);
    EXPECT_EQ(classify_motif(3, 1, 2, 3), Motif::z4);
    EXPECT_EQ(classify_motif(3, 1, 1, 3), Motif::z6);
    EXPECT_EQ(classify_motif(2, 1, 3, 4), Motif::z2);
    EXPECT_EQ(classify_motif(4, 3, 1, 2), Motif::z3);
    EXPECT_EQ(classify_motif(3, 2, 1, 3), Motif::z5);
}

TEST(Motif, AgreesWithVisibilityGraphOnAllWindows) {
    // Every window over five levels.
    for (int a = 1; a <= 5; ++a)
        for (int b = 1; b <= 5; ++b)
            for (int c = 1; c <= 5; ++c)
                for (int d = 1; d <= 5; ++d) {
                    const int want = oracle::motif_of({a, b, c, d});
                    ASSERT_NE(want, 0);
                    EXPECT_EQ(static_cast<int>(classify_motif(a, b, c, d)), want) << a << b << c << d;
                }
}

TEST(MotifProfile, Examples) {
    const auto four = motif_profile(std::span<const Symbol>(seq({3, 1, 2, 3})));
    EXPECT_EQ(four.z[3], 1.0);
    EXPECT_EQ(four.entropy, 0.0);
    const auto p = motif_profile(std::span<const Symbol>(seq({1, 2, 2, 3})));
    EXPECT_EQ(p.z[0], 1.0);
    EXPECT_EQ(p.entropy, 0.0);
    const auto shorty = motif_profile(std::span<const Symbol>(seq({1, 2, 3})));
    for (const double z : shorty.z) EXPECT_EQ(z, 0.0);
    EXPECT_EQ(shorty.entropy, 0.0);
    std::array<double, 6> uniform;
    uniform.fill(1.0 / 6.0);
    EXPECT_NEAR(shannon_entropy(uniform), std::log(6.0), 1e-15);
    EXPECT_NEAR(shannon_entropy(uniform), 1.7918, 1e-4);
}

TEST(MotifProfile, InvariantUnderMonotoneRelabeling) {
    Rng rng(21);
    for (int n = 0; n < 500; ++n) {
        const auto s = oracle::random_sequence(rng, 2, 50);
        std::vector<double> scaled(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) scaled[i] = std::exp(0.7 * s[i]) * 10.0 - 3.0;
        const auto a = motif_profile(std::span<const int>(s));
        const auto b = motif_profile(std::span<const double>(scaled));
        EXPECT_EQ(a.z, b.z);
        EXPECT_EQ(a.entropy, b.entropy);
    }
}

TEST(Features, MatchBruteForceEnumerator) {
    Rng rng(1234);
    for (int n = 0; n < 1000; ++n) {
        const auto raw = oracle::random_sequence(rng, 2, 50);
        const auto s = seq(raw);
        const auto want = oracle::features(raw);
        const auto uni = unigram_features(s);
        const auto bi = bigram_features(s);
        const auto mp = motif_profile(std::span<const Symbol>(s));
        for (std::size_t k = 0; k < 5; ++k) ASSERT_EQ(uni[k], want.unigram[k].value());
        for (std::size_t k = 0; k < 25; ++k) ASSERT_EQ(bi[k], want.bigram[k].value());
        for (std::size_t k = 0; k < 6; ++k) ASSERT_EQ(mp.z[k], want.motif[k].value());
        ASSERT_NEAR(mp.entropy, want.entropy, 1e-12);
        if (raw.size() >= 4) {
            EXPECT_NEAR(std::accumulate(mp.z.begin(), mp.z.end(), 0.0), 1.0, 1e-12);
        }
        EXPECT_GE(mp.entropy, 0.0);
        EXPECT_LE(mp.entropy, std::log(6.0) + 1e-12);
    }
}

TEST(Cyclical, HourAndWeekday) {
    const auto midnight = cyclical_features(monday_ms);
    EXPECT_NEAR(midnight.hour_sin, 0.0, 1e-15);
    EXPECT_NEAR(midnight.hour_cos, 1.0, 1e-15);
    EXPECT_NEAR(midnight.dow_sin, 0.0, 1e-15);
    EXPECT_NEAR(midnight.dow_cos, 1.0, 1e-15);
    const auto six = cyclical_features(monday_ms + 6 * 3'600'000);
    EXPECT_NEAR(six.hour_sin, 1.0, 1e-15);
    EXPECT_NEAR(six.hour_cos, 0.0, 1e-15);
    const auto h23 = cyclical_features(monday_ms + 23 * 3'600'000);
    const auto h12 = cyclical_features(monday_ms + 12 * 3'600'000);
    auto dist = [&](const CyclicalFeatures& a) {
        return std::hypot(a.hour_sin - midnight.hour_sin, a.hour_cos - midnight.hour_cos);
    };
    EXPECT_LT(dist(h23), dist(h12));
    // Sunday is day 6.
    const auto sunday = cyclical_features(monday_ms - 1);
    EXPECT_NEAR(sunday.dow_sin, std::sin(2 * std::numbers::pi * 6 / 7), 1e-12);
    // An offset of +60 min moves 23:30 UTC Sunday into Monday 00:30.
    const auto shifted = cyclical_features(monday_ms - 30 * 60'000, 60);
    EXPECT_NEAR(shifted.dow_cos, 1.0, 1e-15);
    EXPECT_NEAR(shifted.hour_cos, 1.0, 1e-15);
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
        const auto c = cyclical_features(static_cast<std::int64_t>(rng.between(1, 2'000'000'000'000)));
        EXPECT_NEAR(c.hour_sin * c.hour_sin + c.hour_cos * c.hour_cos, 1.0, 1e-12);
        EXPECT_NEAR(c.dow_sin * c.dow_sin + c.dow_cos * c.dow_cos, 1.0, 1e-12);
    }
}

TEST(Featurize, ComposesBlocks) {
    LabeledSession s;
    s.session_id = "x";
    s.truncated_symbols = seq({1, 2, 2, 3});
    s.truncated_timestamps_ms = {monday_ms, monday_ms + 1, monday_ms + 2, monday_ms + 3};
    s.first_event_ms = monday_ms;
    const auto v = featurize(s);
    ASSERT_EQ(v.size(), 41u);
    ASSERT_EQ(feature_names().size(), 41u);
    const std::array<double, 5> uni{0.25, 0.5, 0.25, 0, 0};
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(v[i], uni[i]);
    EXPECT_EQ(v[5 + 1], 1.0 / 3.0);
    EXPECT_EQ(v[5 + 6], 1.0 / 3.0);
    EXPECT_EQ(v[5 + 7], 1.0 / 3.0);
    EXPECT_EQ(v[30], 1.0);
    for (std::size_t i = 31; i < 36; ++i) EXPECT_EQ(v[i], 0.0);
    EXPECT_EQ(v[36], 0.0);
    EXPECT_NEAR(v[37], 0.0, 1e-15);
    EXPECT_NEAR(v[38], 1.0, 1e-15);
    EXPECT_NEAR(v[39], 0.0, 1e-15);
    EXPECT_NEAR(v[40], 1.0, 1e-15);
    EXPECT_EQ(featurize(s), v);

    s.truncated_symbols = seq({4, 5});
    const auto two = featurize(s);
    for (std::size_t i = 30; i < 37; ++i) EXPECT_EQ(two[i], 0.0);
}

TEST(Featurize, NamesAreCanonical) {
    const auto& n = feature_names();
    EXPECT_EQ(n.front(), "p_view");
    EXPECT_EQ(n[5], "p_11");
    EXPECT_EQ(n[11], "p_22");
    EXPECT_EQ(n[30], "z1");
    EXPECT_EQ(n[36], "hz");
    EXPECT_EQ(n.back(), "dow_cos");
    EXPECT_EQ(feature_tag(), columns_tag(n));
}

TEST(FeatureMatrix, FileRoundTripAndParallelAgreement) {
    Rng rng(5);
    std::vector<LabeledSession> sessions;
    for (int i = 0; i < 200; ++i) {
        LabeledSession s;
        s.session_id = "s" + std::to_string(i);
        s.label = static_cast<int>(rng.between(0, 1));
        s.truncated_symbols = seq(oracle::random_sequence(rng, 2, 30));
        s.first_event_ms = 1'544'227'200'000 + rng.between(0, 1'000'000'000);
        sessions.push_back(s);
    }
    const auto m1 = featurize_all(sessions, 0, 1);
    const auto m4 = featurize_all(sessions, 0, 4);
    EXPECT_TRUE(std::equal(m1.values().begin(), m1.values().end(), m4.values().begin()));
    std::ostringstream out;
    write_matrix(out, m1);
    const auto back = read_matrix(out.str());
    EXPECT_EQ(back.columns(), m1.columns());
    EXPECT_EQ(back.ids(), m1.ids());
    EXPECT_EQ(back.labels(), m1.labels());
    EXPECT_TRUE(std::equal(back.values().begin(), back.values().end(), m1.values().begin()));
    EXPECT_THROW(read_matrix("a,b\n1,2\n"), DataError);
}
