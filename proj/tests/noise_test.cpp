#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "tem/errors.hpp"
#include "tem/noise.hpp"

using namespace tem;

// Known-answer vectors from the Random123 distribution (kat_vectors, philox4x32 10 rounds).
TEST(Philox, KnownAnswerZero) {
    const auto out = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out, (Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerAllOnes) {
    const auto out = Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                          {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(out, (Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPiDigits) {
    const auto out = Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                          {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(out, (Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(NoiseStream, PureFunctionOfCoordinates) {
    const NoiseStream a(9, 4, 2, 64, 3);
    const NoiseStream b(9, 4, 2, 64, 3);
    for (std::int64_t i = 0; i < 50; ++i) {
        EXPECT_EQ(a.base_increment(i, 1), b.base_increment(i, 1));
    }
    EXPECT_NE(a.base_increment(0, 0), NoiseStream(9, 5, 2, 64, 3).base_increment(0, 0));
    EXPECT_NE(a.base_increment(0, 0), NoiseStream(10, 4, 2, 64, 3).base_increment(0, 0));
    EXPECT_NE(a.base_increment(0, 0), NoiseStream(9, 4, 2, 64, 4).base_increment(0, 0));
    EXPECT_NE(a.base_increment(0, 0), a.base_increment(0, 1));
    EXPECT_EQ(a.with_path(5).base_increment(7, 0), NoiseStream(9, 5, 2, 64, 3).base_increment(7, 0));
}

TEST(NoiseStream, NestedIncrementsSumExactly) {
    const NoiseStream s(123, 0, 3, 128);
    std::vector<double> coarse(3), fine(3);
    for (int res : {1, 2, 8, 32}) {
        const int m = 128 / res;
        for (std::int64_t step = 0; step < 20; ++step) {
            s.increment(step, res, coarse);
            for (std::size_t c = 0; c < 3; ++c) {
                // Reverse order on purpose: the lattice makes the sum order-free.
                double sum = 0.0;
                for (int j = m - 1; j >= 0; --j) {
                    s.increment(step * m + j, 128, fine);
                    sum += fine[c];
                }
                EXPECT_EQ(std::memcmp(&sum, &coarse[c], sizeof(double)), 0) << res << " " << step;
            }
        }
    }
}

TEST(NoiseStream, IncrementMoments) {
    const NoiseStream s(77, 2, 1, 16);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    std::vector<double> dB(1);
    for (int j = 0; j < n; ++j) {
        s.increment(j, 16, dB);
        sum += dB[0];
        sq += dB[0] * dB[0];
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    // Standard error of the mean is 0.25/sqrt(n) ~ 5.6e-4.
    EXPECT_NEAR(mean, 0.0, 4 * 0.25 / std::sqrt(n));
    EXPECT_NEAR(var, 1.0 / 16.0, 4 * std::sqrt(2.0) / 16.0 / std::sqrt(n));
}

TEST(NoiseStream, StandardNormalTails) {
    const NoiseStream s(5, 0, 2, 1);
    int beyond = 0;
    const int n = 100000;
    for (int j = 0; j < n; ++j) {
        for (std::size_t c = 0; c < 2; ++c) {
            const double z = s.standard_normal(j, c);
            ASSERT_TRUE(std::isfinite(z));
            if (std::abs(z) > 1.959963984540054) ++beyond;
        }
    }
    EXPECT_NEAR(static_cast<double>(beyond) / (2 * n), 0.05, 0.004);
}

TEST(NoiseStream, Errors) {
    EXPECT_THROW(NoiseStream(1, 0, 0, 16), ConfigError);
    EXPECT_THROW(NoiseStream(1, 0, 1, 0), ConfigError);
    EXPECT_THROW(NoiseStream(1, 0, 1, 16, 1u << 24), ConfigError);
    const NoiseStream s(1, 0, 1, 16);
    std::vector<double> out(1), wrong(2);
    EXPECT_THROW(s.increment(0, 3, out), ConfigError);
    EXPECT_THROW(s.increment(0, 32, out), ConfigError);
    EXPECT_THROW(s.increment(0, 16, wrong), DimensionMismatch);
}

TEST(MixSeed, DistinctSalts) {
    EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
    EXPECT_NE(mix_seed(1, 0), mix_seed(2, 0));
    EXPECT_EQ(mix_seed(42, 7), mix_seed(42, 7));
}
