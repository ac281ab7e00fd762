#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "aqlm/adam.hpp"
#include "aqlm/errors.hpp"
#include "aqlm/linalg.hpp"

namespace aqlm {

// Round-to-nearest scalar baseline: each group of `group` consecutive weights in a
// row is mapped onto the grid lo + q * step, q in [0, 2^bits), spanning [min, max].
struct RtnLayer {
    std::size_t bits = 0;
    std::size_t group = 0;
    std::size_t d_out = 0;
    std::size_t d_in = 0;
    std::vector<std::uint8_t> levels;  // d_out x d_in
    std::vector<double> steps;         // d_out x (d_in / group)
    std::vector<double> offsets;       // d_out x (d_in / group)

    std::size_t groups_per_row() const { return d_in / group; }

    Matrix dequantized() const {
        Matrix out(d_out, d_in);
        for (std::size_t i = 0; i < d_out; ++i)
            for (std::size_t p = 0; p < d_in; ++p) {
                const std::size_t gi = i * groups_per_row() + p / group;
                out(i, p) = offsets[gi] + double(levels[i * d_in + p]) * steps[gi];
            }
        return out;
    }

    // 16-bit step and 16-bit offset per group on top of the level bits.
    double avg_bits_per_param() const { return double(bits) + 32.0 / double(group); }
};

inline double rtn_avg_bits_per_param(std::size_t bits, std::size_t group) {
    return double(bits) + 32.0 / double(group);
}

inline RtnLayer rtn_quantize(const Matrix& w, std::size_t bits, std::size_t group) {
    if (bits < 2 || bits > 8) throw InvalidInput("rtn: bits must be in [2, 8]");
    if (group == 0 || w.cols() % group != 0)
        throw InvalidInput("rtn: group " + std::to_string(group) + " does not divide d_in " + std::to_string(w.cols()));
    if (!w.all_finite()) throw InvalidInput("rtn: weights contain non-finite values");
    RtnLayer out;
    out.bits = bits;
    out.group = group;
    out.d_out = w.rows();
    out.d_in = w.cols();
    out.levels.assign(w.size(), 0);
    out.steps.assign(w.rows() * out.groups_per_row(), 0.0);
    out.offsets.assign(out.steps.size(), 0.0);
    const double max_level = double((1u << bits) - 1);
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < out.groups_per_row(); ++j) {
            auto row = w.row(i).subspan(j * group, group);
            const auto [lo_it, hi_it] = std::minmax_element(row.begin(), row.end());
            const double lo = *lo_it;
            const double step = (*hi_it - lo) / max_level;
            const std::size_t gi = i * out.groups_per_row() + j;
            out.offsets[gi] = lo;
            out.steps[gi] = step;
            for (std::size_t t = 0; t < group; ++t) {
                double q = step > 0.0 ? std::round((row[t] - lo) / step) : 0.0;
                q = std::clamp(q, 0.0, max_level);
                out.levels[i * w.cols() + j * group + t] = static_cast<std::uint8_t>(q);
            }
        }
    return out;
}

// Tunes RTN steps and offsets (levels frozen) against the Gram-form loss with
// full-batch Adam, keeping the best parameters seen.
inline double rtn_tune_scales(RtnLayer& rtn, const Matrix& w, const GramMatrix& g, AdamSettings settings,
                              std::size_t steps) {
    const std::size_t ng = rtn.steps.size();
    std::vector<double> params(2 * ng);
    std::copy(rtn.steps.begin(), rtn.steps.end(), params.begin());
    std::copy(rtn.offsets.begin(), rtn.offsets.end(), params.begin() + ng);
    auto evaluate = [&](std::vector<double>& grad) {
        RtnLayer trial = rtn;
        std::copy(params.begin(), params.begin() + ng, trial.steps.begin());
        std::copy(params.begin() + ng, params.end(), trial.offsets.begin());
        const Matrix what = trial.dequantized();
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        std::vector<double> r(w.cols()), rg(w.cols());
        for (std::size_t i = 0; i < w.rows(); ++i) {
            for (std::size_t p = 0; p < w.cols(); ++p) r[p] = what(i, p) - w(i, p);
            for (std::size_t p = 0; p < w.cols(); ++p) rg[p] = dot(g.row(p), r);
            loss += dot(r, rg);
            for (std::size_t p = 0; p < w.cols(); ++p) {
                const std::size_t gi = i * rtn.groups_per_row() + p / rtn.group;
                grad[gi] += 2.0 * rg[p] * double(rtn.levels[i * w.cols() + p]);
                grad[ng + gi] += 2.0 * rg[p];
            }
        }
        return loss;
    };
    std::vector<double> grad(params.size());
    Adam adam(params.size(), settings);
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> best_params = params;
    for (std::size_t s = 0; s <= steps; ++s) {
        const double loss = evaluate(grad);
        if (!std::isfinite(loss)) break;
        if (loss < best) {
            best = loss;
            best_params = params;
        }
        if (s == steps) break;
        adam.step(params, grad);
    }
    std::copy(best_params.begin(), best_params.begin() + ng, rtn.steps.begin());
    std::copy(best_params.begin() + ng, best_params.end(), rtn.offsets.begin());
    return best;
}

}  // namespace aqlm
