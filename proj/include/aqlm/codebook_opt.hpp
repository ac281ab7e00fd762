#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "aqlm/adam.hpp"
#include "aqlm/config.hpp"
#include "aqlm/format.hpp"
#include "aqlm/linalg.hpp"

namespace aqlm {

enum class PhaseStatus { ok, non_finite_loss };

// Gradients w.r.t. the continuous parameters of a layer, with codes held fixed.
struct LayerGradients {
    std::vector<std::vector<double>> codebooks;  // per codebook, same layout as Codebook::data
    std::vector<double> scales;
};

// Chains dL/dWhat through What[i, jg + t] = s_i * sum_m C_m[codes(i, j, m)][t].
template <typename Real>
LayerGradients backprop_to_layer(const QuantizedLayer<Real>& layer, const Matrix& d_what) {
    const std::size_t g = layer.group_size();
    const std::size_t M = layer.num_codebooks();
    LayerGradients grads;
    grads.codebooks.assign(M, std::vector<double>(layer.codebook_size() * g, 0.0));
    grads.scales.assign(layer.d_out, 0.0);
    for (std::size_t i = 0; i < layer.d_out; ++i) {
        const double s = static_cast<double>(layer.scales[i]);
        auto drow = d_what.row(i);
        double ds = 0.0;
        for (std::size_t j = 0; j < layer.num_groups(); ++j) {
            for (std::size_t m = 0; m < M; ++m) {
                const std::size_t c = layer.codes(i, j, m);
                auto cw = layer.codebooks[m].codeword(c);
                double* gc = grads.codebooks[m].data() + c * g;
                for (std::size_t t = 0; t < g; ++t) {
                    const double d = drow[j * g + t];
                    gc[t] += s * d;
                    ds += d * static_cast<double>(cw[t]);
                }
            }
        }
        grads.scales[i] = ds;
    }
    return grads;
}

struct LossAndGrads {
    double loss = 0.0;
    LayerGradients grads;
};

// layer_loss(W, dequantize(layer), G) and its exact gradient. dL/dWhat = 2 (What - W) G.
template <typename Real>
LossAndGrads loss_and_grads(const QuantizedLayer<Real>& layer, const Matrix& w, const GramMatrix& g) {
    const Matrix what = dequantize(layer);
    LossAndGrads out;
    out.loss = layer_loss(w, what, g);
    Matrix d_what(w.rows(), w.cols());
    std::vector<double> r(w.cols());
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t p = 0; p < w.cols(); ++p) r[p] = what(i, p) - w(i, p);
        auto drow = d_what.row(i);
        for (std::size_t p = 0; p < w.cols(); ++p) drow[p] = 2.0 * dot(g.row(p), r);
    }
    out.grads = backprop_to_layer(layer, d_what);
    return out;
}

namespace detail {

template <typename Real>
std::size_t param_count(const QuantizedLayer<Real>& layer) {
    return layer.num_codebooks() * layer.codebook_size() * layer.group_size() + layer.d_out;
}

template <typename Real>
void pack_params(const QuantizedLayer<Real>& layer, double* out) {
    for (const auto& cb : layer.codebooks)
        for (Real v : cb.data) *out++ = static_cast<double>(v);
    for (Real s : layer.scales) *out++ = static_cast<double>(s);
}

template <typename Real>
void unpack_params(const double* in, QuantizedLayer<Real>& layer) {
    for (auto& cb : layer.codebooks)
        for (auto& v : cb.data) v = static_cast<Real>(*in++);
    for (auto& s : layer.scales) s = static_cast<Real>(*in++);
}

inline void pack_grads(const LayerGradients& grads, double* out, bool codebooks, bool scales) {
    for (const auto& cb : grads.codebooks)
        for (double v : cb) *out++ = codebooks ? v : 0.0;
    for (double s : grads.scales) *out++ = scales ? s : 0.0;
}

}  // namespace detail

inline AdamSettings adam_settings(const QuantConfig& config) {
    return {config.adam_lr, config.adam_beta1, config.adam_beta2, config.adam_eps};
}

// Phase 2: config.adam_steps_per_phase full-batch Adam steps on codebooks and
// scales with fresh moments. Returns the lowest-loss parameters observed
// (the input included), so the output loss never exceeds the input loss.
template <typename Real>
QuantizedLayer<Real> train_codebooks(const QuantizedLayer<Real>& layer, const Matrix& w, const GramMatrix& g,
                                     const QuantConfig& config, PhaseStatus* status = nullptr,
                                     double* best_loss_out = nullptr) {
    const double floor = scale_floor(w.max_abs());
    const std::size_t n = detail::param_count(layer);
    const std::size_t n_scale_start = n - layer.d_out;
    std::vector<double> params(n), grads(n);
    detail::pack_params(layer, params.data());

    Adam adam(n, adam_settings(config));
    QuantizedLayer<Real> current = layer;
    QuantizedLayer<Real> best = layer;
    double best_loss = std::numeric_limits<double>::infinity();
    if (status) *status = PhaseStatus::ok;

    for (std::size_t step = 0; step <= config.adam_steps_per_phase; ++step) {
        detail::unpack_params(params.data(), current);
        const auto lg = loss_and_grads(current, w, g);
        if (!std::isfinite(lg.loss)) {
            if (status) *status = PhaseStatus::non_finite_loss;
            break;
        }
        if (lg.loss < best_loss) {
            best_loss = lg.loss;
            best = current;
        }
        if (step == config.adam_steps_per_phase) break;
        detail::pack_grads(lg.grads, grads.data(), true, true);
        adam.step(params, grads);
        for (std::size_t p = n_scale_start; p < n; ++p) params[p] = std::max(params[p], floor);
    }
    if (best_loss_out) *best_loss_out = best_loss;
    return best;
}

}  // namespace aqlm
