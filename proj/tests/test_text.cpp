#include <algorithm>
#include <atomic>
#include <set>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>
#include <zlib.h>

#include "frustra/error.hpp"
#include "frustra/parallel.hpp"
#include "frustra/random.hpp"
#include "frustra/text.hpp"
#include "test_util.hpp"

using namespace frustra;

TEST(Text, SplitHandlesQuotesAndEmptyFields) {
    EXPECT_EQ(split_delimited("a,,b", ','), (std::vector<std::string>{"a", "", "b"}));
    EXPECT_EQ(split_delimited("\"x,y\",z", ','), (std::vector<std::string>{"x,y", "z"}));
    EXPECT_EQ(split_delimited("\"say \"\"hi\"\"\"", ','), (std::vector<std::string>{"say \"hi\""}));
    EXPECT_EQ(split_delimited("a\tb", '\t'), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(split_delimited("", ','), (std::vector<std::string>{""}));
}

TEST(Text, QuoteFieldRoundTrips) {
    for (const std::string s : {"plain", "with,comma", "q\"uote", ""}) {
        const auto line = quote_field(s, ',') + ",tail";
        const auto fields = split_delimited(line, ',');
        ASSERT_EQ(fields.size(), 2u);
        EXPECT_EQ(fields[0], s);
    }
}

TEST(Text, NumbersParseStrictly) {
    EXPECT_EQ(parse_number<long>("42"), 42);
    EXPECT_EQ(parse_number<long>(" +7 "), 7);
    EXPECT_FALSE(parse_number<long>("4x"));
    EXPECT_FALSE(parse_number<long>(""));
    EXPECT_EQ(parse_number<double>("0.25"), 0.25);
    EXPECT_THROW(parse_or_throw<int>("abc", "count"), DataError);
}

TEST(Text, FormatDoubleRoundTrips) {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.normal() * std::pow(10.0, rng.between(-20, 20));
        EXPECT_EQ(*parse_number<double>(format_double(v)), v);
    }
    EXPECT_EQ(format_double(0.5), "0.5");
    EXPECT_EQ(format_fixed(2.0 / 3.0, 4), "0.6667");
}

TEST(Text, ConfigParsesSectionsAndHashes) {
    const auto cfg = KeyValueConfig::parse("# comment\nseed = 7\n\ngbdt.rounds=10\ngbdt.lambda=2\n");
    EXPECT_EQ(cfg.number_or<int>("seed", 0), 7);
    EXPECT_EQ(cfg.number_or<int>("missing", 3), 3);
    const auto g = cfg.section("gbdt.");
    EXPECT_EQ(g.entries().size(), 2u);
    EXPECT_EQ(g.get("rounds"), "10");
    EXPECT_NO_THROW(g.require_known({"rounds", "lambda"}, "gbdt"));
    EXPECT_THROW(g.require_known({"rounds"}, "gbdt"), ConfigError);
    EXPECT_THROW(KeyValueConfig::parse("no equals sign"), ConfigError);
    EXPECT_THROW(KeyValueConfig::parse("a=b").number_or<int>("a", 0), ConfigError);

    const auto same = KeyValueConfig::parse("gbdt.lambda=2\nseed=7\ngbdt.rounds=10");
    EXPECT_EQ(cfg.hash(), same.hash());
    EXPECT_NE(cfg.hash(), KeyValueConfig::parse("seed=8").hash());
}

TEST(Text, MissingConfigFileIsConfigError) {
    EXPECT_THROW(KeyValueConfig::load("/nonexistent/frustra.cfg"), ConfigError);
}

TEST(Text, AtomicWriterLeavesPartialUntilCommit) {
    TempDir dir;
    const auto target = dir / "out.txt";
    {
        AtomicWriter w(target);
        w.stream() << "half";
    }
    EXPECT_FALSE(std::filesystem::exists(target));
    EXPECT_TRUE(std::filesystem::exists(dir / "out.txt.partial"));
    write_file(target, "done\n");
    EXPECT_EQ(read_file(target), "done\n");
    EXPECT_FALSE(std::filesystem::exists(dir / "out.txt.partial"));
}

TEST(Text, ReadFileInflatesGzip) {
    TempDir dir;
    const auto path = dir / "events.csv.gz";
    const std::string body = "a,b\n1,2\n";
    gzFile gz = gzopen(path.c_str(), "wb");
    ASSERT_NE(gz, nullptr);
    gzwrite(gz, body.data(), static_cast<unsigned>(body.size()));
    gzclose(gz);
    EXPECT_EQ(read_file(path), body);
    EXPECT_THROW(read_file(dir / "missing.csv"), IoError);
}

TEST(Random, StreamsAreReproducibleAndDistinct) {
    Rng a(11), b(11);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
    std::set<std::uint64_t> seeds;
    for (std::uint64_t i = 0; i < 1000; ++i) seeds.insert(derive_seed(42, i));
    EXPECT_EQ(seeds.size(), 1000u);
    EXPECT_NE(derive_seed(1, 0), derive_seed(0, 1));
}

TEST(Random, HelpersStayInRange) {
    Rng rng(5);
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const auto v = rng.between(-3, 3);
        EXPECT_GE(v, -3);
        EXPECT_LE(v, 3);
        const double u = rng.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        sum += rng.normal();
    }
    EXPECT_NEAR(sum / 20000.0, 0.0, 0.05);

    std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
    rng.shuffle(std::span<int>(v));
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8}));
}

TEST(Parallel, CoversEveryIndexOnce) {
    for (unsigned threads : {1u, 3u, 8u}) {
        std::vector<std::atomic<int>> hits(1000);
        parallel_for(hits.size(), threads, [&](std::size_t i) { ++hits[i]; });
        for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
    }
}

TEST(Parallel, RethrowsWorkerFailure) {
    EXPECT_THROW(parallel_for(100, 4,
                              [](std::size_t i) {
                                  if (i == 37) throw TrainingError("boom");
                              }),
                 TrainingError);
}
