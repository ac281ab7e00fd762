#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "aqlm/aqlm.hpp"
#include "oracles/oracles.hpp"

namespace testutil {

inline aqlm::Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed, double stddev = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, stddev);
    aqlm::Matrix m(rows, cols);
    for (auto& v : m.values()) v = nd(rng);
    return m;
}

inline oracle::Dense dense(const aqlm::Matrix& m) {
    return {m.rows(), m.cols(), std::vector<double>(m.values().begin(), m.values().end())};
}

template <typename Real>
oracle::Books books(const aqlm::QuantizedLayer<Real>& layer) {
    oracle::Books b;
    b.g = layer.group_size();
    b.k = layer.codebook_size();
    for (const auto& cb : layer.codebooks) b.data.emplace_back(cb.data.begin(), cb.data.end());
    return b;
}

inline std::vector<double> gram_values(const aqlm::GramMatrix& g) {
    return g.values().values();
}

// Layer with Gaussian codebooks, uniform random codes and positive scales.
template <typename Real = float>
aqlm::QuantizedLayer<Real> random_layer(const aqlm::QuantConfig& cfg, std::size_t d_out, std::size_t d_in,
                                        std::uint64_t seed) {
    aqlm::QuantizedLayer<Real> layer(cfg, d_out, d_in);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::uniform_int_distribution<unsigned> code(0, unsigned(cfg.codebook_size() - 1));
    std::uniform_real_distribution<double> scale(0.5, 2.0);
    for (auto& cb : layer.codebooks)
        for (auto& v : cb.data) v = static_cast<Real>(nd(rng));
    for (auto& c : layer.codes.data) c = static_cast<std::uint16_t>(code(rng));
    for (auto& s : layer.scales) s = static_cast<Real>(scale(rng));
    return layer;
}

}  // namespace testutil
