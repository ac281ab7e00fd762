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

// Loss as a function of the flattened (codebooks, scales) vector, via the oracle path.
long double oracle_loss(const QuantizedLayer<double>& shape, const Matrix& w, const std::vector<double>& g,
                        const std::vector<long double>& params) {
    auto books = testutil::books(shape);
    std::size_t q = 0;
    for (auto& cb : books.data)
        for (auto& v : cb) v = double(params[q++]);
    std::vector<double> scales(shape.d_out);
    for (auto& s : scales) s = double(params[q++]);
    const auto what = oracle::naive_dequantize(books, shape.codes.data, scales, shape.d_out, shape.d_in);
    long double total = 0.0L;
    std::vector<double> r(shape.d_in);
    for (std::size_t i = 0; i < shape.d_out; ++i) {
        for (std::size_t p = 0; p < shape.d_in; ++p) r[p] = w(i, p) - what.at(i, p);
        total += oracle::quad(r, g);
    }
    return total;
}

std::vector<double> flat_grads(const LayerGradients& g) {
    std::vector<double> out;
    for (const auto& cb : g.codebooks) out.insert(out.end(), cb.begin(), cb.end());
    out.insert(out.end(), g.scales.begin(), g.scales.end());
    return out;
}

}  // namespace

TEST(LossAndGrads, ExactLayerHasZeroLossAndGradient) {
    const auto layer = testutil::random_layer<double>(cfg(4, 2, 3), 3, 8, 1);
    const Matrix w = dequantize(layer);
    const auto lg = loss_and_grads(layer, w, gram(testutil::gaussian(8, 10, 2)));
    EXPECT_EQ(lg.loss, 0.0);
    for (double v : flat_grads(lg.grads)) EXPECT_EQ(v, 0.0);
}

TEST(LossAndGrads, HandDifferentiatedScalarCase) {
    // What = s * c0 = 2 * [1, 2] = [2, 4]; r = What - W = [1, 3]; loss = 10.
    // dL/dc0 = 2 s r = [4, 12]; dL/dc1 = 0; dL/ds = 2 r . c0 = 14.
    QuantizedLayer<double> layer(cfg(2, 1, 1), 1, 2);
    layer.codebooks[0].data = {1.0, 2.0, 7.0, -3.0};
    layer.scales[0] = 2.0;
    const Matrix w(1, 2, {1.0, 1.0});
    const auto lg = loss_and_grads(layer, w, GramMatrix::identity(2));
    EXPECT_DOUBLE_EQ(lg.loss, 10.0);
    EXPECT_EQ(lg.grads.codebooks[0], (std::vector<double>{4.0, 12.0, 0.0, 0.0}));
    EXPECT_EQ(lg.grads.scales, (std::vector<double>{14.0}));
}

TEST(LossAndGrads, MatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto layer = testutil::random_layer<double>(cfg(4, 2, 3), 6, 16, seed);
        const auto w = testutil::gaussian(6, 16, 100 + seed);
        const auto g = gram(testutil::gaussian(16, 32, 200 + seed));
        const auto gv = testutil::gram_values(g);
        const auto analytic = flat_grads(loss_and_grads(layer, w, g).grads);
        std::vector<long double> params;
        for (const auto& cb : layer.codebooks)
            for (double v : cb.data) params.push_back(v);
        for (double s : layer.scales) params.push_back(s);
        const auto fd = oracle::fd_gradient(
            [&](const std::vector<long double>& p) { return oracle_loss(layer, w, gv, p); }, params, 1e-4L);
        ASSERT_EQ(fd.size(), analytic.size());
        double gmax = 0.0;
        for (double v : fd) gmax = std::max(gmax, std::abs(v));
        for (std::size_t q = 0; q < fd.size(); ++q)
            EXPECT_LE(std::abs(fd[q] - analytic[q]), 1e-4 * std::max(std::abs(fd[q]), 1e-6 * gmax)) << "coord " << q;
    }
}

TEST(LossAndGrads, LossEqualsLayerLoss) {
    const auto layer = testutil::random_layer<float>(cfg(8, 2, 4), 5, 16, 4);
    const auto w = testutil::gaussian(5, 16, 5);
    const auto g = gram(testutil::gaussian(16, 20, 6));
    EXPECT_EQ(loss_and_grads(layer, w, g).loss, layer_loss(w, dequantize(layer), g));
}

TEST(TrainCodebooks, AlreadyOptimalLayerUnchanged) {
    const auto layer = testutil::random_layer<double>(cfg(4, 2, 3), 4, 8, 7);
    const Matrix w = dequantize(layer);
    const auto g = gram(testutil::gaussian(8, 12, 8));
    double best = -1.0;
    const auto out = train_codebooks(layer, w, g, cfg(4, 2, 3), nullptr, &best);
    EXPECT_LE(layer_loss(w, dequantize(out), g), 1e-10);
    EXPECT_EQ(best, 0.0);
}

TEST(TrainCodebooks, ReducesLossFromKMeansInit) {
    int strict = 0;
    const int seeds = 20;
    for (int seed = 0; seed < seeds; ++seed) {
        const auto c = cfg(8, 2, 6, seed);
        const auto w = testutil::gaussian(32, 32, 400 + seed);
        const auto g = gram(testutil::gaussian(32, 64, 500 + seed));
        const auto init = residual_kmeans_init<float>(w, c);
        const double before = layer_loss(w, dequantize(init), g);
        const double after = layer_loss(w, dequantize(train_codebooks(init, w, g, c)), g);
        EXPECT_LE(after, before);
        strict += after < before;
    }
    EXPECT_GE(strict, 19);
}

TEST(TrainCodebooks, ZeroLearningRateIsBitExact) {
    auto c = cfg(4, 2, 4);
    c.adam_lr = 0.0;
    const auto layer = testutil::random_layer<float>(c, 6, 16, 9);
    const auto w = testutil::gaussian(6, 16, 10);
    const auto out = train_codebooks(layer, w, gram(testutil::gaussian(16, 20, 11)), c);
    EXPECT_EQ(out, layer);
}

TEST(TrainCodebooks, DeterministicAndCodesFrozen) {
    const auto c = cfg(4, 2, 4);
    const auto layer = testutil::random_layer<float>(c, 6, 16, 12);
    const auto w = testutil::gaussian(6, 16, 13);
    const auto g = gram(testutil::gaussian(16, 20, 14));
    const auto a = train_codebooks(layer, w, g, c);
    EXPECT_EQ(a, train_codebooks(layer, w, g, c));
    EXPECT_EQ(a.codes, layer.codes);
    const double floor = scale_floor(w.max_abs());
    for (float s : a.scales) EXPECT_GE(double(s), floor * (1 - 1e-6));
}

TEST(TrainCodebooks, NonFiniteLossAbortsWithBestSoFar) {
    auto c = cfg(4, 1, 2);
    c.adam_lr = 1e300;
    const auto layer = testutil::random_layer<double>(c, 2, 8, 15);
    const auto w = testutil::gaussian(2, 8, 16);
    const auto g = gram(testutil::gaussian(8, 9, 17));
    PhaseStatus status = PhaseStatus::ok;
    const auto out = train_codebooks(layer, w, g, c, &status);
    EXPECT_EQ(status, PhaseStatus::non_finite_loss);
    EXPECT_EQ(out, layer);
    EXPECT_NO_THROW(out.validate());
}
