#include <gtest/gtest.h>

#include <set>
#include <vector>

#include "jmsim/rng.hpp"
#include "test_util.hpp"

using namespace jmsim;

// Known-answer vectors published with the Random123 library.
TEST(Philox, KnownAnswerZeroCounterZeroKey) {
    const auto out = Philox4x32::block({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out[0], 0x6627e8d5u);
    EXPECT_EQ(out[1], 0xe169c58du);
    EXPECT_EQ(out[2], 0xbc57ac4cu);
    EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
    const auto out = Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                       {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(out[0], 0x408f276du);
    EXPECT_EQ(out[1], 0x41c83b0eu);
    EXPECT_EQ(out[2], 0xa20bc7c6u);
    EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(StreamRng, SameAddressSameDraws) {
    StreamRng a(42, 7, StreamPurpose::round, 3), b(42, 7, StreamPurpose::round, 3);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(StreamRng, DistinctAddressesDiffer) {
    std::set<std::uint32_t> firsts;
    firsts.insert(StreamRng(42, 7, StreamPurpose::round, 3)());
    firsts.insert(StreamRng(43, 7, StreamPurpose::round, 3)());
    firsts.insert(StreamRng(42, 8, StreamPurpose::round, 3)());
    firsts.insert(StreamRng(42, 7, StreamPurpose::drift, 3)());
    firsts.insert(StreamRng(42, 7, StreamPurpose::round, 4)());
    firsts.insert(StreamRng(42, 7ull << 33, StreamPurpose::round, 3)());
    EXPECT_EQ(firsts.size(), 6u);
}

TEST(StreamRng, UniformStaysInsideOpenInterval) {
    StreamRng r(1, 0, StreamPurpose::data);
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(StreamRng, UniformAndNormalMoments) {
    StreamRng r(2024, 5, StreamPurpose::data);
    std::vector<double> u, z;
    for (int i = 0; i < 200000; ++i) u.push_back(r.uniform());
    for (int i = 0; i < 200000; ++i) z.push_back(r.normal());
    // Tolerances are about five standard errors.
    EXPECT_NEAR(tu::mean(u), 0.5, 5 * std::sqrt(1.0 / 12 / 200000));
    EXPECT_NEAR(tu::variance(u), 1.0 / 12, 0.002);
    EXPECT_NEAR(tu::mean(z), 0.0, 5 / std::sqrt(200000.0));
    EXPECT_NEAR(tu::variance(z), 1.0, 5 * std::sqrt(2.0 / 200000));
}

TEST(DeriveSeed, DeterministicAndSpread) {
    EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
    EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
    EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 2, 4));
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(99, i));
    EXPECT_EQ(seen.size(), 1000u);
}
