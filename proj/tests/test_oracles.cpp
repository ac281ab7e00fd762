#include <gtest/gtest.h>

#include "oracles/oracles.hpp"

TEST(Oracle, FdQuadratic) {
    const auto g = oracle::fd_gradient([](const std::vector<long double>& p) { return p[0] * p[0]; }, {3.0L}, 1e-4L);
    EXPECT_NEAR(g[0], 6.0, 1e-8);
}

TEST(Oracle, FdConstant) {
    const auto g = oracle::fd_gradient([](const std::vector<long double>&) { return 4.0L; }, {1.0L, -2.0L}, 1e-4L);
    EXPECT_EQ(g, (std::vector<double>{0.0, 0.0}));
}

TEST(Oracle, ExhaustiveSingleCodeword) {
    oracle::Books b;
    b.g = 2;
    b.k = 1;
    b.data = {{0.5, -1.0}, {2.0, 2.0}};
    const auto res = oracle::exhaustive_codes({1.0, 0.0, 3.0, -1.0}, b, 1.0, std::vector<double>{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
    EXPECT_EQ(res.codes, (std::vector<std::uint16_t>{0, 0, 0, 0}));
}

TEST(Oracle, ExhaustiveTieGoesToSmallestTuple) {
    oracle::Books b;
    b.g = 1;
    b.k = 2;
    b.data = {{1.0, 1.0}};
    const auto res = oracle::exhaustive_codes({1.0}, b, 1.0, {1.0});
    EXPECT_EQ(res.codes, (std::vector<std::uint16_t>{0}));
    EXPECT_EQ(res.loss, 0.0);
}

TEST(Oracle, ExhaustiveGuard) {
    oracle::Books b;
    b.g = 1;
    b.k = 2;
    b.data = {std::vector<double>(2, 0.0)};
    EXPECT_THROW(oracle::exhaustive_codes(std::vector<double>(21, 0.0), b, 1.0, std::vector<double>(21 * 21, 0.0)),
                 std::length_error);
    EXPECT_NO_THROW(oracle::exhaustive_codes(std::vector<double>(4, 0.0), b, 1.0, std::vector<double>(16, 0.0)));
}

TEST(Oracle, DirectLossByHand) {
    // (W - What) = [1, 2], X = [[1], [1]] -> (3)^2.
    const oracle::Dense w(1, 2, {1, 2}), what(1, 2, {0, 0}), x(2, 1, {1, 1});
    EXPECT_EQ(oracle::direct_loss(w, what, x), 9.0);
}
