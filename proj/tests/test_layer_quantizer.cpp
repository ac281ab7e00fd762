#include <gtest/gtest.h>

#include "common.hpp"

using namespace aqlm;

namespace {

QuantConfig cfg(std::size_t g, std::size_t m, std::size_t b, std::uint64_t seed = 0) {
    QuantConfig c;
    c.group_size = g;
    c.num_codebooks = m;
    c.code_bits = b;
    c.seed = seed;
    return c;
}

void expect_non_increasing(const LossTrace& trace) {
    for (std::size_t t = 1; t < trace.size(); ++t)
        EXPECT_LE(trace[t].loss, trace[t - 1].loss) << "trace entry " << t << " (" << phase_name(trace[t].phase) << ")";
}

}  // namespace

TEST(QuantizeLayer, CapacityCaseReachesZero) {
    const std::vector<std::vector<double>> groups{{1, 0, 2, -1}, {0.5, 0.5, 0.5, 0.5}, {-3, 1, 0, 2}, {0, 0, 1, 0}};
    Matrix w(8, 16);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            for (std::size_t t = 0; t < 4; ++t) w(i, j * 4 + t) = (1.0 + 0.25 * double(i)) * groups[(i + j) % 4][t];
    const auto x = testutil::gaussian(16, 32, 1);
    const auto res = quantize_layer<float>(w, x, cfg(4, 1, 2));
    EXPECT_LE(layer_loss(w, dequantize(res.layer), gram(x)), 1e-10 * frobenius_sq(matmul(w, x)));
    EXPECT_LE(relative_loss(res.layer, w, x), 1e-10);
}

TEST(QuantizeLayer, TraceIsNonIncreasingAndStopsOnTolerance) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto w = testutil::gaussian(16, 32, 10 + seed);
        const auto x = testutil::gaussian(32, 64, 20 + seed);
        auto c = cfg(8, 2, 5, seed);
        c.adam_lr = 1e-3;
        const auto res = quantize_layer<float>(w, x, c);
        ASSERT_EQ(res.trace.size(), 1 + 2 * res.outer_iterations);
        EXPECT_EQ(res.trace.front().phase, Phase::init);
        expect_non_increasing(res.trace);
        // Every completed iteration before the last improved by at least tau.
        for (std::size_t it = 1; it < res.outer_iterations; ++it) {
            const double prev = res.trace[2 * it - 2].loss, cur = res.trace[2 * it].loss;
            EXPECT_GE((prev - cur) / prev, c.rel_tolerance);
        }
        if (res.outer_iterations < c.max_outer_iters) {
            const std::size_t it = res.outer_iterations;
            const double prev = res.trace[2 * it - 2].loss, cur = res.trace[2 * it].loss;
            EXPECT_TRUE(!(prev > 0.0) || (prev - cur) / prev < c.rel_tolerance);
        }
        EXPECT_EQ(res.status, PhaseStatus::ok);
        EXPECT_DOUBLE_EQ(res.trace.back().loss, layer_loss(w, dequantize(res.layer), gram(x)));
    }
}

TEST(QuantizeLayer, InfiniteToleranceRunsOnePair) {
    auto c = cfg(8, 2, 4);
    c.rel_tolerance = std::numeric_limits<double>::infinity();
    const auto w = testutil::gaussian(8, 16, 3);
    const auto res = quantize_layer<float>(w, testutil::gaussian(16, 24, 4), c);
    EXPECT_EQ(res.outer_iterations, 1u);
    ASSERT_EQ(res.trace.size(), 3u);
    EXPECT_EQ(res.trace[1].phase, Phase::codebooks);
    EXPECT_EQ(res.trace[2].phase, Phase::codes);
}

TEST(QuantizeLayer, MaxOuterItersBound) {
    auto c = cfg(4, 1, 3);
    c.rel_tolerance = 1e-300;
    c.max_outer_iters = 3;
    const auto res = quantize_layer<float>(testutil::gaussian(4, 8, 5), testutil::gaussian(8, 12, 6), c);
    EXPECT_LE(res.outer_iterations, 3u);
}

TEST(QuantizeLayer, DeterministicAndThreadIndependent) {
    auto c = cfg(8, 2, 4, 7);
    const auto w = testutil::gaussian(12, 16, 7);
    const auto x = testutil::gaussian(16, 30, 8);
    const auto a = quantize_layer<float>(w, x, c);
    c.threads = 4;
    const auto b = quantize_layer<float>(w, x, c);
    EXPECT_EQ(serialize(a.layer), serialize(b.layer));
    EXPECT_EQ(a.trace.size(), b.trace.size());
}

TEST(QuantizeLayer, BeatsRtnAtMatchedBits) {
    const auto c = cfg(2, 1, 5);
    ASSERT_NEAR(avg_bits_per_param(64, 64, 2, 1, 5), rtn_avg_bits_per_param(2, 32), 0.05);
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
        const auto w = testutil::gaussian(64, 64, 30 + seed);
        const auto x = testutil::gaussian(64, 256, 40 + seed);
        const auto g = gram(x);
        auto cs = c;
        cs.seed = seed;
        const double aqlm = relative_loss(quantize_layer<float>(w, g, cs).layer, w, g);
        const double rtn = layer_loss(w, rtn_quantize(w, 2, 32).dequantized(), g) / gram_inner(w, w, g);
        EXPECT_LT(aqlm, rtn);
    }
}

TEST(QuantizeLayer, MoreCodebooksNeverWorse) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto w = testutil::gaussian(16, 32, 50 + seed);
        const auto g = gram(testutil::gaussian(32, 64, 60 + seed));
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t m = 1; m <= 3; ++m) {
            const double l = quantize_layer<float>(w, g, cfg(8, m, 4, seed)).trace.back().loss;
            EXPECT_LE(l, prev);
            prev = l;
        }
    }
}

TEST(QuantizeLayer, MoreCalibrationSamplesGeneralizeBetter) {
    int better = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto w = testutil::gaussian(16, 32, 70 + seed);
        const auto held_out = gram(testutil::gaussian(32, 512, 80 + seed));
        const auto c = cfg(4, 2, 4, seed);
        const auto few = quantize_layer<float>(w, testutil::gaussian(32, 12, 90 + seed), c);
        const auto many = quantize_layer<float>(w, testutil::gaussian(32, 256, 90 + seed), c);
        better += relative_loss(many.layer, w, held_out) < relative_loss(few.layer, w, held_out);
    }
    EXPECT_GE(better, 4);
}

TEST(QuantizeLayer, RejectsInvalidInput) {
    const auto w = testutil::gaussian(4, 8, 1);
    EXPECT_THROW(quantize_layer<float>(w, testutil::gaussian(6, 10, 2), cfg(4, 1, 2)), InvalidInput);
    EXPECT_THROW(quantize_layer<float>(w, Matrix(8, 0), cfg(4, 1, 2)), InvalidInput);
    EXPECT_THROW(quantize_layer<float>(w, testutil::gaussian(8, 10, 2), cfg(3, 1, 2)), ConfigError);
    auto bad = w;
    bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(quantize_layer<float>(bad, testutil::gaussian(8, 10, 2), cfg(4, 1, 2)), InvalidInput);
}

TEST(RelativeLoss, Conventions) {
    const auto layer = testutil::random_layer<double>(cfg(4, 2, 3), 3, 8, 1);
    const auto x = testutil::gaussian(8, 12, 2);
    EXPECT_EQ(relative_loss(layer, dequantize(layer), x), 0.0);

    QuantizedLayer<double> zero(cfg(4, 1, 2), 3, 8);
    const auto w = testutil::gaussian(3, 8, 3);
    EXPECT_DOUBLE_EQ(relative_loss(zero, w, x), 1.0);
    EXPECT_EQ(relative_loss(zero, Matrix(3, 8), x), 0.0);

    const double direct = oracle::direct_loss(testutil::dense(w), testutil::dense(dequantize(layer)), testutil::dense(x)) /
                          oracle::direct_loss(testutil::dense(w), oracle::Dense(3, 8), testutil::dense(x));
    EXPECT_LE(oracle::rel_diff(relative_loss(layer, w, x), direct), 1e-9);
    EXPECT_THROW(relative_loss(layer, w, testutil::gaussian(6, 4, 1)), InvalidInput);
}
