#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "aqlm/errors.hpp"
#include "aqlm/format.hpp"
#include "aqlm/linalg.hpp"
#include "aqlm/parallel.hpp"

namespace aqlm {

inline std::size_t lut_entry_count(std::size_t d_in, std::size_t group_size, std::size_t num_codebooks,
                                   std::size_t code_bits) {
    return (d_in / group_size) * num_codebooks * (std::size_t{1} << code_bits);
}

// Dense rows of dequantize(layer) kept in storage precision; the oracle path.
template <typename Real>
struct DenseWeights {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Real> data;

    explicit DenseWeights(const QuantizedLayer<Real>& layer) : rows(layer.d_out), cols(layer.d_in) {
        const Matrix w = dequantize(layer);
        data.reserve(w.size());
        for (double v : w.values()) data.push_back(static_cast<Real>(v));
    }

    std::vector<double> apply(std::span<const double> x) const {
        if (x.size() != cols) throw InvalidInput("matvec: input length does not match d_in");
        std::vector<double> y(rows, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
            const Real* wr = data.data() + i * cols;
            double s = 0.0;
            for (std::size_t p = 0; p < cols; ++p) s += static_cast<double>(wr[p]) * x[p];
            y[i] = s;
        }
        return y;
    }
};

template <typename Real>
std::vector<double> matvec_reference(const QuantizedLayer<Real>& layer, std::span<const double> x) {
    return DenseWeights<Real>(layer).apply(x);
}

// T[(j * M + m) * 2^B + c] = <codeword c of codebook m, x restricted to group j>.
template <typename Real>
std::vector<Real> build_lut(const QuantizedLayer<Real>& layer, std::span<const double> x) {
    const std::size_t g = layer.group_size();
    const std::size_t M = layer.num_codebooks();
    const std::size_t K = layer.codebook_size();
    std::vector<Real> lut(layer.num_groups() * M * K);
    std::vector<Real> xg(g);
    for (std::size_t j = 0; j < layer.num_groups(); ++j) {
        for (std::size_t t = 0; t < g; ++t) xg[t] = static_cast<Real>(x[j * g + t]);
        for (std::size_t m = 0; m < M; ++m) {
            const Real* cb = layer.codebooks[m].data.data();
            Real* out = lut.data() + (j * M + m) * K;
            for (std::size_t c = 0; c < K; ++c) {
                Real s = 0;
                for (std::size_t t = 0; t < g; ++t) s += cb[c * g + t] * xg[t];
                out[c] = s;
            }
        }
    }
    return lut;
}

// y_i = s_i * sum_j sum_m T[j][m][codes(i, j, m)]: M lookups and adds per group.
template <typename Real>
std::vector<double> matvec_lut(const QuantizedLayer<Real>& layer, std::span<const double> x, std::size_t workers = 1) {
    if (x.size() != layer.d_in) throw InvalidInput("matvec_lut: input length does not match d_in");
    const auto lut = build_lut(layer, x);
    const std::size_t K = layer.codebook_size();
    const std::size_t per_row = layer.codes.per_row();
    std::vector<double> y(layer.d_out, 0.0);
    parallel_for(layer.d_out, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const std::uint16_t* codes = layer.codes.data.data() + i * per_row;
            double acc = 0.0;
            for (std::size_t q = 0; q < per_row; ++q) acc += static_cast<double>(lut[q * K + codes[q]]);
            y[i] = static_cast<double>(layer.scales[i]) * acc;
        }
    });
    return y;
}

// Column-by-column application of matvec_lut to X (d_in x n).
template <typename Real>
Matrix matmul_lut(const QuantizedLayer<Real>& layer, const Matrix& x, std::size_t workers = 1) {
    if (x.rows() != layer.d_in) throw InvalidInput("matmul_lut: input rows do not match d_in");
    Matrix y(layer.d_out, x.cols());
    std::vector<double> col(x.rows());
    for (std::size_t c = 0; c < x.cols(); ++c) {
        for (std::size_t p = 0; p < x.rows(); ++p) col[p] = x(p, c);
        const auto yc = matvec_lut(layer, col, workers);
        for (std::size_t i = 0; i < layer.d_out; ++i) y(i, c) = yc[i];
    }
    return y;
}

struct BenchEntry {
    std::string path;
    double median_ns = 0.0;
};

struct BenchReport {
    std::size_t reps = 0;
    std::vector<BenchEntry> entries;
    double ratio = 0.0;  // reference median / lut median
    std::size_t lut_entries = 0;
    std::size_t weight_count = 0;
    std::string note;
};

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// Median wall time per matrix-vector product for the dense-reference and LUT
// paths. Hardware dependent; informational only.
template <typename Real>
BenchReport bench_matvec(const QuantizedLayer<Real>& layer, std::size_t reps, std::uint64_t seed = 0) {
    BenchReport rep;
    rep.reps = reps;
    rep.lut_entries = lut_entry_count(layer.d_in, layer.group_size(), layer.num_codebooks(), layer.config.code_bits);
    rep.weight_count = layer.d_out * layer.d_in;
    if (rep.lut_entries >= rep.weight_count)
        rep.note = "lookup table has at least as many entries as the weight matrix; LUT path cannot be faster";
    if (reps == 0) return rep;

    std::vector<double> x(layer.d_in);
    std::uint64_t state = seed * 6364136223846793005ULL + 1442695040888963407ULL;
    for (auto& v : x) {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        v = double(state >> 11) / double(1ULL << 53) - 0.5;
    }
    const DenseWeights<Real> dense(layer);
    using clock = std::chrono::steady_clock;
    auto time = [&](auto&& fn) {
        std::vector<double> samples;
        samples.reserve(reps);
        volatile double sink = 0.0;
        for (std::size_t r = 0; r < reps; ++r) {
            const auto t0 = clock::now();
            const auto y = fn();
            const auto t1 = clock::now();
            sink = sink + y[0];
            samples.push_back(double(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
        }
        return detail::median(std::move(samples));
    };
    const double ref = time([&] { return dense.apply(x); });
    const double lut = time([&] { return matvec_lut(layer, x); });
    rep.entries.push_back({"reference", ref});
    rep.entries.push_back({"lut", lut});
    rep.ratio = lut > 0.0 ? ref / lut : 0.0;
    return rep;
}

}  // namespace aqlm
