#pragma once

#include <cmath>
#include <limits>
#include <cstddef>
#include <string>
#include <vector>

#include "aqlm/beam_search.hpp"
#include "aqlm/codebook_opt.hpp"
#include "aqlm/config.hpp"
#include "aqlm/errors.hpp"
#include "aqlm/format.hpp"
#include "aqlm/init.hpp"
#include "aqlm/linalg.hpp"

namespace aqlm {

enum class Phase { init, codebooks, codes, finetune };

inline const char* phase_name(Phase p) {
    switch (p) {
        case Phase::init: return "init";
        case Phase::codebooks: return "codebooks";
        case Phase::codes: return "codes";
        case Phase::finetune: return "finetune";
    }
    return "?";
}

struct TraceEntry {
    Phase phase;
    std::size_t iteration;
    double loss;
};

using LossTrace = std::vector<TraceEntry>;

enum class InitMethod { residual_kmeans, random };

template <typename Real = float>
struct QuantizeResult {
    QuantizedLayer<Real> layer;
    LossTrace trace;
    std::size_t outer_iterations = 0;
    PhaseStatus status = PhaseStatus::ok;
};

// ||W X - What X||^2 / ||W X||^2, with 0 when both are zero.
template <typename Real>
double relative_loss(const QuantizedLayer<Real>& layer, const Matrix& w, const GramMatrix& g) {
    const double denom = gram_inner(w, w, g);
    const double num = layer_loss(w, dequantize(layer), g);
    if (denom <= 0.0) return num <= 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return num / denom;
}

template <typename Real>
double relative_loss(const QuantizedLayer<Real>& layer, const Matrix& w, const Matrix& x) {
    if (w.cols() != x.rows()) throw InvalidInput("relative_loss: calibration rows do not match d_in");
    return relative_loss(layer, w, gram(x));
}

// Alternates Phase 2 (codebooks and scales) and Phase 1 (codes) from the
// chosen initialization until the relative improvement over one outer
// iteration drops below config.rel_tolerance, or max_outer_iters is reached.
template <typename Real = float>
QuantizeResult<Real> quantize_layer(const Matrix& w, const GramMatrix& g, const QuantConfig& config,
                                    InitMethod init = InitMethod::residual_kmeans) {
    config.validate_for(w.cols());
    if (g.dim() != w.cols()) throw InvalidInput("quantize_layer: gram dimension does not match d_in");
    if (!w.all_finite()) throw InvalidInput("quantize_layer: weights contain non-finite values");

    QuantizeResult<Real> res;
    res.layer = init == InitMethod::residual_kmeans ? residual_kmeans_init<Real>(w, config) : random_init<Real>(w, config);
    double loss = layer_loss(w, dequantize(res.layer), g);
    res.trace.push_back({Phase::init, 0, loss});

    for (std::size_t it = 1; it <= config.max_outer_iters; ++it) {
        const double prev = loss;
        PhaseStatus st = PhaseStatus::ok;
        double cb_loss = loss;
        res.layer = train_codebooks(res.layer, w, g, config, &st, &cb_loss);
        if (st != PhaseStatus::ok) res.status = st;
        res.trace.push_back({Phase::codebooks, it, cb_loss});

        res.layer = update_codes(res.layer, w, g, config.beam_size, config.threads, config.beam_sweeps);
        loss = layer_loss(w, dequantize(res.layer), g);
        res.trace.push_back({Phase::codes, it, loss});
        res.outer_iterations = it;

        if (!(prev > 0.0) || (prev - loss) / prev < config.rel_tolerance) break;
    }
    return res;
}

template <typename Real = float>
QuantizeResult<Real> quantize_layer(const Matrix& w, const Matrix& x, const QuantConfig& config,
                                    InitMethod init = InitMethod::residual_kmeans) {
    if (x.cols() < 1) throw InvalidInput("quantize_layer: calibration set has no columns");
    if (x.rows() != w.cols())
        throw InvalidInput("quantize_layer: calibration rows " + std::to_string(x.rows()) + " do not match d_in " +
                           std::to_string(w.cols()));
    return quantize_layer<Real>(w, gram(x), config, init);
}

}  // namespace aqlm
