#include <gtest/gtest.h>

#include "common.hpp"

using namespace aqlm;
using testutil::gaussian;

TEST(Gram, IdentityInputGivesIdentity) {
    const auto g = gram(Matrix::identity(2));
    EXPECT_EQ(g.values(), Matrix::identity(2));
}

TEST(Gram, HandMultipliedExample) {
    const Matrix x(2, 2, {1, 2, 3, 4});
    const auto g = gram(x);
    EXPECT_EQ(g.values(), Matrix(2, 2, {5, 11, 11, 25}));
}

TEST(Gram, ZeroInputGivesZero) {
    const auto g = gram(Matrix(3, 5));
    for (double v : g.values().values()) EXPECT_EQ(v, 0.0);
}

TEST(Gram, RejectsZeroDimensionAndNonFinite) {
    EXPECT_THROW(gram(Matrix(0, 3)), InvalidInput);
    EXPECT_THROW(gram(Matrix(3, 0)), InvalidInput);
    Matrix bad(2, 2);
    bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(gram(bad), InvalidInput);
}

TEST(Gram, SymmetricAndPsd) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = gaussian(7, 11, 100 + trial);
        const auto g = gram(x);
        for (std::size_t i = 0; i < 7; ++i)
            for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(g(i, j), g(j, i));
        std::vector<double> v(7);
        double vv = 0.0;
        for (auto& e : v) {
            e = nd(rng);
            vv += e * e;
        }
        EXPECT_GE(row_quad(v, g), -1e-10 * vv * g.trace());
    }
}

TEST(Gram, ConstructorSymmetrizes) {
    const GramMatrix g(Matrix(2, 2, {1, 2, 4, 3}));
    EXPECT_EQ(g(0, 1), 3.0);
    EXPECT_EQ(g(1, 0), 3.0);
    EXPECT_THROW(GramMatrix(Matrix(2, 3)), InvalidInput);
}

TEST(GramInner, SelfEqualsOutputNorm) {
    const auto w = gaussian(5, 6, 1);
    const auto x = gaussian(6, 9, 2);
    const double direct = frobenius_sq(matmul(w, x));
    EXPECT_LE(oracle::rel_diff(gram_inner(w, w, gram(x)), direct), 1e-10);
}

TEST(GramInner, IdentityGramIsFrobenius) {
    const auto a = gaussian(3, 4, 5);
    const auto b = gaussian(3, 4, 6);
    EXPECT_LE(oracle::rel_diff(gram_inner(a, b, GramMatrix::identity(4)), dot(a.values(), b.values())), 1e-14);
}

TEST(GramInner, MatchesExplicitProducts) {
    for (int trial = 0; trial < 10; ++trial) {
        const auto a = gaussian(4, 6, 10 + trial);
        const auto b = gaussian(4, 6, 20 + trial);
        const auto x = gaussian(6, 8, 30 + trial);
        const double expect = dot(matmul(a, x).values(), matmul(b, x).values());
        const auto g = gram(x);
        EXPECT_LE(oracle::rel_diff(gram_inner(a, b, g), expect), 1e-10);
        EXPECT_LE(oracle::rel_diff(gram_inner(a, b, g), gram_inner(b, a, g)), 1e-10);
    }
}

TEST(GramInner, ShapeMismatchThrows) {
    EXPECT_THROW(gram_inner(Matrix(2, 3), Matrix(3, 2), GramMatrix::identity(3)), InvalidInput);
    EXPECT_THROW(gram_inner(Matrix(2, 3), Matrix(2, 3), GramMatrix::identity(4)), InvalidInput);
}

TEST(LayerLoss, ExactReconstructionIsZero) {
    const auto w = gaussian(4, 5, 9);
    EXPECT_EQ(layer_loss(w, w, gram(gaussian(5, 7, 10))), 0.0);
}

TEST(LayerLoss, OnesResidualWithIdentityGram) {
    const Matrix w(2, 2, {1, 1, 1, 1});
    EXPECT_EQ(layer_loss(w, Matrix(2, 2), GramMatrix::identity(2)), 4.0);
}

TEST(LayerLoss, MatchesDirectEvaluation) {
    for (int trial = 0; trial < 20; ++trial) {
        const auto w = gaussian(6, 8, 40 + trial);
        const auto what = gaussian(6, 8, 60 + trial);
        const auto x = gaussian(8, 13, 80 + trial);
        const double direct = oracle::direct_loss(testutil::dense(w), testutil::dense(what), testutil::dense(x));
        EXPECT_LE(oracle::rel_diff(layer_loss(w, what, gram(x)), direct), 1e-8);
    }
}

TEST(LayerLoss, NeverNegative) {
    // Rank-deficient Gram where rounding can push the quadratic form below zero.
    const auto x = gaussian(8, 2, 7);
    const auto g = gram(x);
    for (int trial = 0; trial < 50; ++trial) {
        const auto w = gaussian(3, 8, 200 + trial);
        EXPECT_GE(layer_loss(w, w, g), 0.0);
    }
    EXPECT_THROW(layer_loss(Matrix(2, 3), Matrix(2, 4), GramMatrix::identity(3)), InvalidInput);
}

TEST(Matrix, ConstructionChecksLength) {
    EXPECT_THROW(Matrix(2, 2, {1.0, 2.0, 3.0}), InvalidInput);
    EXPECT_EQ(Matrix(2, 3).transposed().rows(), 3u);
}
