#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aqlm/config.hpp"
#include "aqlm/errors.hpp"
#include "aqlm/linalg.hpp"

namespace aqlm {

// One codebook: `size` codeword vectors of dimension `dim`, stored codeword-major
// (the g x 2^B column layout, with each column contiguous).
template <typename Real>
struct Codebook {
    std::size_t dim = 0;
    std::size_t size = 0;
    std::vector<Real> data;

    Codebook() = default;
    Codebook(std::size_t dim_, std::size_t size_) : dim(dim_), size(size_), data(dim_ * size_, Real(0)) {}

    std::span<Real> codeword(std::size_t c) { return {data.data() + c * dim, dim}; }
    std::span<const Real> codeword(std::size_t c) const { return {data.data() + c * dim, dim}; }

    friend bool operator==(const Codebook&, const Codebook&) = default;
};

// Integer codes indexed (row i, group j, codebook m), stored in that row-major order.
struct CodeTensor {
    std::size_t rows = 0;
    std::size_t groups = 0;
    std::size_t books = 0;
    std::vector<std::uint16_t> data;

    CodeTensor() = default;
    CodeTensor(std::size_t rows_, std::size_t groups_, std::size_t books_)
        : rows(rows_), groups(groups_), books(books_), data(rows_ * groups_ * books_, 0) {}

    std::uint16_t& operator()(std::size_t i, std::size_t j, std::size_t m) {
        return data[(i * groups + j) * books + m];
    }
    std::uint16_t operator()(std::size_t i, std::size_t j, std::size_t m) const {
        return data[(i * groups + j) * books + m];
    }
    std::size_t per_row() const { return groups * books; }
    std::span<std::uint16_t> row(std::size_t i) { return {data.data() + i * per_row(), per_row()}; }
    std::span<const std::uint16_t> row(std::size_t i) const { return {data.data() + i * per_row(), per_row()}; }

    friend bool operator==(const CodeTensor&, const CodeTensor&) = default;
};

// Compressed weight matrix: row i, group j reconstructs to
// scales[i] * sum_m codebooks[m].codeword(codes(i, j, m)).
template <typename Real = float>
struct QuantizedLayer {
    QuantConfig config;
    std::size_t d_out = 0;
    std::size_t d_in = 0;
    std::vector<Codebook<Real>> codebooks;
    CodeTensor codes;
    std::vector<Real> scales;

    QuantizedLayer() = default;

    // Zero codebooks, zero codes, unit scales.
    QuantizedLayer(const QuantConfig& cfg, std::size_t out, std::size_t in) : config(cfg), d_out(out), d_in(in) {
        cfg.validate_for(in);
        codebooks.assign(cfg.num_codebooks, Codebook<Real>(cfg.group_size, cfg.codebook_size()));
        codes = CodeTensor(out, in / cfg.group_size, cfg.num_codebooks);
        scales.assign(out, Real(1));
    }

    std::size_t group_size() const { return config.group_size; }
    std::size_t num_groups() const { return d_in / config.group_size; }
    std::size_t num_codebooks() const { return config.num_codebooks; }
    std::size_t codebook_size() const { return config.codebook_size(); }

    void validate() const {
        config.validate_for(d_in);
        const std::size_t g = config.group_size;
        const std::size_t k = config.codebook_size();
        if (codebooks.size() != config.num_codebooks) throw InvalidInput("layer: wrong number of codebooks");
        for (const auto& cb : codebooks) {
            if (cb.dim != g || cb.size != k || cb.data.size() != g * k)
                throw InvalidInput("layer: codebook shape does not match config");
            for (Real v : cb.data)
                if (!std::isfinite(static_cast<double>(v))) throw InvalidInput("layer: non-finite codebook entry");
        }
        if (codes.rows != d_out || codes.groups != d_in / g || codes.books != config.num_codebooks ||
            codes.data.size() != d_out * (d_in / g) * config.num_codebooks)
            throw InvalidInput("layer: code tensor shape does not match layer");
        for (auto c : codes.data)
            if (c >= k) throw InvalidInput("layer: code " + std::to_string(c) + " out of range");
        if (scales.size() != d_out) throw InvalidInput("layer: scale count does not match d_out");
        for (Real s : scales)
            if (!std::isfinite(static_cast<double>(s)) || !(s > Real(0)))
                throw InvalidInput("layer: scales must be finite and positive");
    }

    template <typename To>
    QuantizedLayer<To> cast() const {
        QuantizedLayer<To> out;
        out.config = config;
        out.d_out = d_out;
        out.d_in = d_in;
        out.codes = codes;
        out.codebooks.reserve(codebooks.size());
        for (const auto& cb : codebooks) {
            Codebook<To> c(cb.dim, cb.size);
            for (std::size_t t = 0; t < cb.data.size(); ++t) c.data[t] = static_cast<To>(cb.data[t]);
            out.codebooks.push_back(std::move(c));
        }
        out.scales.reserve(scales.size());
        for (Real s : scales) out.scales.push_back(static_cast<To>(s));
        return out;
    }

    friend bool operator==(const QuantizedLayer& a, const QuantizedLayer& b) {
        return a.d_out == b.d_out && a.d_in == b.d_in && a.config.group_size == b.config.group_size &&
               a.config.num_codebooks == b.config.num_codebooks && a.config.code_bits == b.config.code_bits &&
               a.codebooks == b.codebooks && a.codes == b.codes && a.scales == b.scales;
    }
};

// Sum of the selected codewords for group (i, j), written into `out` (length g),
// accumulated in Real so that every path reconstructing weights agrees bitwise.
template <typename Real>
void reconstruct_group(const QuantizedLayer<Real>& layer, std::size_t i, std::size_t j, std::span<Real> out) {
    const std::size_t g = layer.group_size();
    for (std::size_t t = 0; t < g; ++t) out[t] = Real(0);
    for (std::size_t m = 0; m < layer.num_codebooks(); ++m) {
        auto cw = layer.codebooks[m].codeword(layer.codes(i, j, m));
        for (std::size_t t = 0; t < g; ++t) out[t] += cw[t];
    }
}

// Unscaled reconstruction: row i holds the codeword sums without s_i.
template <typename Real>
Matrix dequantize_unscaled(const QuantizedLayer<Real>& layer) {
    Matrix out(layer.d_out, layer.d_in);
    const std::size_t g = layer.group_size();
    std::vector<Real> buf(g);
    for (std::size_t i = 0; i < layer.d_out; ++i)
        for (std::size_t j = 0; j < layer.num_groups(); ++j) {
            reconstruct_group(layer, i, j, std::span<Real>(buf));
            for (std::size_t t = 0; t < g; ++t) out(i, j * g + t) = static_cast<double>(buf[t]);
        }
    return out;
}

template <typename Real>
Matrix dequantize(const QuantizedLayer<Real>& layer) {
    Matrix out(layer.d_out, layer.d_in);
    const std::size_t g = layer.group_size();
    std::vector<Real> buf(g);
    for (std::size_t i = 0; i < layer.d_out; ++i) {
        const Real s = layer.scales[i];
        for (std::size_t j = 0; j < layer.num_groups(); ++j) {
            reconstruct_group(layer, i, j, std::span<Real>(buf));
            for (std::size_t t = 0; t < g; ++t) out(i, j * g + t) = static_cast<double>(Real(s * buf[t]));
        }
    }
    return out;
}

// Storage cost with 16-bit codebooks and scales, divided by d_out * d_in.
inline double avg_bits_per_param(std::size_t d_out, std::size_t d_in, std::size_t group_size,
                                 std::size_t num_codebooks, std::size_t code_bits) {
    if (d_out == 0 || d_in == 0) throw InvalidInput("avg_bits_per_param: zero dimension");
    if (group_size == 0 || d_in % group_size != 0)
        throw InvalidInput("avg_bits_per_param: group size " + std::to_string(group_size) +
                           " does not divide d_in " + std::to_string(d_in));
    if (code_bits < 1 || code_bits > 16) throw InvalidInput("avg_bits_per_param: code bits must be in [1, 16]");
    if (num_codebooks < 1) throw InvalidInput("avg_bits_per_param: need at least one codebook");
    const double codebook_bits = 16.0 * double(group_size) * double(num_codebooks) * std::ldexp(1.0, int(code_bits));
    const double code_bits_total =
        double(d_out) * double(d_in / group_size) * double(code_bits) * double(num_codebooks);
    const double scale_bits = 16.0 * double(d_out);
    return (codebook_bits + code_bits_total + scale_bits) / (double(d_out) * double(d_in));
}

template <typename Real>
double avg_bits_per_param(const QuantizedLayer<Real>& layer) {
    return avg_bits_per_param(layer.d_out, layer.d_in, layer.group_size(), layer.num_codebooks(),
                              layer.config.code_bits);
}

// Lower bound for per-row scales: 1e-12 * max|W|, or 1e-12 for an all-zero W.
inline double scale_floor(double max_abs_weight) {
    return 1e-12 * (max_abs_weight > 0.0 ? max_abs_weight : 1.0);
}

}  // namespace aqlm
