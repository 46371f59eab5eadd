#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "memdiff/rng.hpp"

using namespace memdiff;

// Known-answer vectors published with the Random123 reference implementation.
TEST(Philox, KnownAnswers) {
    using A4 = std::array<std::uint32_t, 4>;
    EXPECT_EQ(detail::philox4x32({0, 0, 0, 0}, {0, 0}), (A4{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
    EXPECT_EQ(detail::philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
              (A4{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
    EXPECT_EQ(detail::philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
              (A4{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(RandomStream, DeterministicPerSeedAndStream) {
    RandomStream a(7, 3), b(7, 3), c(7, 4), d(8, 3);
    for (int i = 0; i < 100; ++i) {
        const auto va = a.next_u64();
        EXPECT_EQ(va, b.next_u64());
        EXPECT_NE(va, c.next_u64());
        EXPECT_NE(va, d.next_u64());
    }
}

TEST(RandomStream, UniformOpenIntervalAndMoments) {
    RandomStream r(1, 0);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
        s += u;
        s2 += u * u;
    }
    EXPECT_NEAR(s / n, 0.5, 4 * std::sqrt(1.0 / 12 / n));
    EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12, 2e-3);
}

TEST(RandomStream, NormalMoments) {
    RandomStream r(2, 0);
    const int n = 400000;
    double m1 = 0, m2 = 0, m4 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        m1 += z;
        m2 += z * z;
        m4 += z * z * z * z;
    }
    EXPECT_NEAR(m1 / n, 0.0, 4 / std::sqrt(n));
    EXPECT_NEAR(m2 / n, 1.0, 4 * std::sqrt(2.0 / n));
    EXPECT_NEAR(m4 / n, 3.0, 4 * std::sqrt(96.0 / n));
}

TEST(RandomStream, BelowCoversRangeUniformly) {
    RandomStream r(3, 0);
    std::array<int, 7> counts{};
    const int n = 70000;
    for (int i = 0; i < n; ++i) {
        const auto k = r.below(7);
        ASSERT_LT(k, 7u);
        ++counts[k];
    }
    double chi2 = 0;
    for (int c : counts) chi2 += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
    EXPECT_LT(chi2, 22.46);  // chi-square(6) 0.999 quantile
}

TEST(DeriveSeed, DistinctPerComponentAndMaster) {
    std::set<std::uint64_t> seen;
    for (const char* name : {"dataset", "train", "sample", "reference"}) {
        for (std::uint64_t m = 0; m < 4; ++m) seen.insert(derive_seed(name, m));
    }
    EXPECT_EQ(seen.size(), 16u);
    EXPECT_EQ(derive_seed("train", 5), derive_seed("train", 5));
}
