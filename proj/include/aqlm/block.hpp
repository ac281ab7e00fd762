#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "aqlm/adam.hpp"
#include "aqlm/codebook_opt.hpp"
#include "aqlm/config.hpp"
#include "aqlm/errors.hpp"
#include "aqlm/format.hpp"
#include "aqlm/layer_quantizer.hpp"
#include "aqlm/linalg.hpp"

namespace aqlm {

// Layer order per wiring:
//   single: [proj]                y = W u
//   mlp:    [up, down]            y = W_down act(W_up u)
//   gated:  [up, gate, down]      y = W_down (act(W_gate u) * W_up u)
// where u = gain * x / rms(x) per column when the norm is enabled, else u = x.
enum class Wiring { single, mlp, gated };
enum class Activation { identity, relu, silu };

inline std::size_t wiring_layer_count(Wiring w) {
    switch (w) {
        case Wiring::single: return 1;
        case Wiring::mlp: return 2;
        case Wiring::gated: return 3;
    }
    return 0;
}

inline double activate(Activation a, double z) {
    switch (a) {
        case Activation::identity: return z;
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::silu: return z / (1.0 + std::exp(-z));
    }
    return z;
}

inline double activate_grad(Activation a, double z) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::silu: {
            const double sig = 1.0 / (1.0 + std::exp(-z));
            return sig * (1.0 + z * (1.0 - sig));
        }
    }
    return 1.0;
}

struct BlockShape {
    Wiring wiring = Wiring::gated;
    Activation activation = Activation::silu;
    bool use_norm = true;
    double rms_eps = 1e-6;
};

// Forward intermediates, enough for an exact reverse pass.
struct BlockTape {
    Matrix x;
    std::vector<double> inv_rms;  // per column, 1 when the norm is disabled
    Matrix u;                     // normed input
    Matrix a;                     // first linear output
    Matrix b;                     // gate pre-activation (gated only)
    Matrix h;                     // input of the last linear (mlp / gated)
    Matrix y;
};

namespace detail {

inline void check_block(const BlockShape& shape, const std::vector<Matrix>& weights, std::size_t d,
                        std::size_t gain_size) {
    if (weights.size() != wiring_layer_count(shape.wiring))
        throw InvalidInput("block: expected " + std::to_string(wiring_layer_count(shape.wiring)) + " linear layers");
    if (gain_size != d) throw InvalidInput("block: norm gain length does not match input dimension");
    const Matrix& first = weights.front();
    if (first.cols() != d) throw InvalidInput("block: first layer width does not match input dimension");
    if (shape.wiring == Wiring::gated) {
        const Matrix& gate = weights[1];
        if (gate.rows() != first.rows() || gate.cols() != d) throw InvalidInput("block: gate shape must match up shape");
    }
    if (shape.wiring != Wiring::single && weights.back().cols() != first.rows())
        throw InvalidInput("block: down layer width does not match hidden dimension");
}

}  // namespace detail

inline BlockTape block_forward_dense(const BlockShape& shape, const std::vector<double>& gain,
                                     const std::vector<Matrix>& weights, const Matrix& x) {
    detail::check_block(shape, weights, x.rows(), gain.size());
    BlockTape tape;
    tape.x = x;
    const std::size_t d = x.rows(), n = x.cols();
    tape.inv_rms.assign(n, 1.0);
    tape.u = Matrix(d, n);
    for (std::size_t t = 0; t < n; ++t) {
        if (shape.use_norm) {
            double ss = 0.0;
            for (std::size_t k = 0; k < d; ++k) ss += x(k, t) * x(k, t);
            tape.inv_rms[t] = 1.0 / std::sqrt(ss / double(d) + shape.rms_eps);
            for (std::size_t k = 0; k < d; ++k) tape.u(k, t) = gain[k] * x(k, t) * tape.inv_rms[t];
        } else {
            for (std::size_t k = 0; k < d; ++k) tape.u(k, t) = x(k, t);
        }
    }
    tape.a = matmul(weights[0], tape.u);
    switch (shape.wiring) {
        case Wiring::single:
            tape.y = tape.a;
            break;
        case Wiring::mlp:
            tape.h = tape.a;
            for (auto& v : tape.h.values()) v = activate(shape.activation, v);
            tape.y = matmul(weights[1], tape.h);
            break;
        case Wiring::gated:
            tape.b = matmul(weights[1], tape.u);
            tape.h = Matrix(tape.a.rows(), n);
            for (std::size_t q = 0; q < tape.h.size(); ++q)
                tape.h.values()[q] = activate(shape.activation, tape.b.values()[q]) * tape.a.values()[q];
            tape.y = matmul(weights[2], tape.h);
            break;
    }
    return tape;
}

// Gradients of L = ||y - target||^2 w.r.t. each linear weight and the norm gain.
struct DenseBlockGrads {
    std::vector<Matrix> weights;
    std::vector<double> gain;
};

inline DenseBlockGrads block_backward_dense(const BlockShape& shape, const std::vector<double>& /*gain*/,
                                            const std::vector<Matrix>& weights, const BlockTape& tape,
                                            const Matrix& target) {
    require_same_shape(tape.y, target, "block_backward");
    const std::size_t d = tape.x.rows(), n = tape.x.cols();
    Matrix dy(tape.y.rows(), n);
    for (std::size_t q = 0; q < dy.size(); ++q) dy.values()[q] = 2.0 * (tape.y.values()[q] - target.values()[q]);

    DenseBlockGrads out;
    out.weights.resize(weights.size());
    Matrix du;
    const Matrix u_t = tape.u.transposed();
    switch (shape.wiring) {
        case Wiring::single: {
            out.weights[0] = matmul(dy, u_t);
            du = matmul(weights[0].transposed(), dy);
            break;
        }
        case Wiring::mlp: {
            out.weights[1] = matmul(dy, tape.h.transposed());
            Matrix da = matmul(weights[1].transposed(), dy);
            for (std::size_t q = 0; q < da.size(); ++q)
                da.values()[q] *= activate_grad(shape.activation, tape.a.values()[q]);
            out.weights[0] = matmul(da, u_t);
            du = matmul(weights[0].transposed(), da);
            break;
        }
        case Wiring::gated: {
            out.weights[2] = matmul(dy, tape.h.transposed());
            const Matrix dh = matmul(weights[2].transposed(), dy);
            Matrix da(dh.rows(), n), db(dh.rows(), n);
            for (std::size_t q = 0; q < dh.size(); ++q) {
                const double bq = tape.b.values()[q];
                da.values()[q] = dh.values()[q] * activate(shape.activation, bq);
                db.values()[q] = dh.values()[q] * tape.a.values()[q] * activate_grad(shape.activation, bq);
            }
            out.weights[0] = matmul(da, u_t);
            out.weights[1] = matmul(db, u_t);
            du = matmul(weights[0].transposed(), da);
            const Matrix du_gate = matmul(weights[1].transposed(), db);
            for (std::size_t q = 0; q < du.size(); ++q) du.values()[q] += du_gate.values()[q];
            break;
        }
    }
    out.gain.assign(d, 0.0);
    if (shape.use_norm)
        for (std::size_t k = 0; k < d; ++k) {
            double s = 0.0;
            for (std::size_t t = 0; t < n; ++t) s += du(k, t) * tape.x(k, t) * tape.inv_rms[t];
            out.gain[k] = s;
        }
    return out;
}

// Unquantized block, the source of the recorded target outputs.
struct DenseBlock {
    BlockShape shape;
    std::vector<double> norm_gain;
    std::vector<Matrix> weights;
};

template <typename Real = float>
struct SurrogateBlock {
    BlockShape shape;
    std::vector<double> norm_gain;
    std::vector<QuantizedLayer<Real>> layers;

    std::vector<Matrix> dequantized() const {
        std::vector<Matrix> out;
        out.reserve(layers.size());
        for (const auto& l : layers) out.push_back(dequantize(l));
        return out;
    }
};

inline Matrix block_forward(const DenseBlock& block, const Matrix& x) {
    return block_forward_dense(block.shape, block.norm_gain, block.weights, x).y;
}

template <typename Real>
Matrix block_forward(const SurrogateBlock<Real>& block, const Matrix& x) {
    return block_forward_dense(block.shape, block.norm_gain, block.dequantized(), x).y;
}

inline double block_loss(const Matrix& yhat, const Matrix& y) {
    require_same_shape(yhat, y, "block_loss");
    double s = 0.0;
    for (std::size_t q = 0; q < y.size(); ++q) {
        const double d = yhat.values()[q] - y.values()[q];
        s += d * d;
    }
    return s;
}

template <typename Real>
double block_loss(const SurrogateBlock<Real>& block, const Matrix& x, const Matrix& y) {
    return block_loss(block_forward(block, x), y);
}

// Which continuous parameters Phase 3 updates; codes are always frozen.
struct FinetuneTargets {
    bool codebooks = true;
    bool scales = true;
    bool norm_gains = true;
};

template <typename Real>
struct BlockGrads {
    std::vector<LayerGradients> layers;
    std::vector<double> gain;
};

template <typename Real>
double block_loss_and_grads(const SurrogateBlock<Real>& block, const Matrix& x, const Matrix& y,
                            BlockGrads<Real>& grads) {
    const auto weights = block.dequantized();
    const auto tape = block_forward_dense(block.shape, block.norm_gain, weights, x);
    const double loss = block_loss(tape.y, y);
    const auto dense = block_backward_dense(block.shape, block.norm_gain, weights, tape, y);
    grads.layers.clear();
    for (std::size_t l = 0; l < block.layers.size(); ++l)
        grads.layers.push_back(backprop_to_layer(block.layers[l], dense.weights[l]));
    grads.gain = dense.gain;
    return loss;
}

template <typename Real = float>
struct FinetuneResult {
    SurrogateBlock<Real> block;
    LossTrace trace;
    PhaseStatus status = PhaseStatus::ok;
    std::size_t epochs = 0;
};

// Phase 3: full-batch Adam on the selected continuous parameters against the
// recorded outputs. Runs epochs of config.adam_steps_per_phase steps, keeps the
// best parameters seen, and stops once an epoch improves the loss by less than
// config.rel_tolerance (relative) or after config.max_outer_iters epochs.
template <typename Real>
FinetuneResult<Real> finetune_block(const SurrogateBlock<Real>& block, const Matrix& x, const Matrix& y,
                                    const QuantConfig& config, FinetuneTargets targets = {}) {
    config.validate();
    std::size_t n = block.norm_gain.size();
    std::vector<double> floors;
    for (const auto& l : block.layers) {
        n += detail::param_count(l);
        double smax = 0.0;
        for (Real s : l.scales) smax = std::max(smax, static_cast<double>(s));
        floors.push_back(scale_floor(smax));
    }
    std::vector<double> params(n), grad(n);
    auto pack = [&](const SurrogateBlock<Real>& b) {
        double* p = params.data();
        for (const auto& l : b.layers) {
            detail::pack_params(l, p);
            p += detail::param_count(l);
        }
        std::copy(b.norm_gain.begin(), b.norm_gain.end(), p);
    };
    auto unpack = [&](SurrogateBlock<Real>& b) {
        const double* p = params.data();
        for (auto& l : b.layers) {
            detail::unpack_params(p, l);
            p += detail::param_count(l);
        }
        std::copy(p, p + b.norm_gain.size(), b.norm_gain.begin());
    };
    pack(block);

    FinetuneResult<Real> res;
    res.block = block;
    SurrogateBlock<Real> current = block;
    double best_loss = block_loss(block, x, y);
    if (!std::isfinite(best_loss)) {
        res.status = PhaseStatus::non_finite_loss;
        return res;
    }
    res.trace.push_back({Phase::init, 0, best_loss});
    if (best_loss == 0.0) return res;

    Adam adam(n, adam_settings(config));
    BlockGrads<Real> bg;
    for (std::size_t epoch = 1; epoch <= config.max_outer_iters; ++epoch) {
        const double prev = best_loss;
        bool aborted = false;
        for (std::size_t step = 0; step < config.adam_steps_per_phase; ++step) {
            unpack(current);
            const double loss = block_loss_and_grads(current, x, y, bg);
            if (!std::isfinite(loss)) {
                res.status = PhaseStatus::non_finite_loss;
                aborted = true;
                break;
            }
            if (loss < best_loss) {
                best_loss = loss;
                res.block = current;
            }
            double* g = grad.data();
            for (std::size_t l = 0; l < current.layers.size(); ++l) {
                detail::pack_grads(bg.layers[l], g, targets.codebooks, targets.scales);
                g += detail::param_count(current.layers[l]);
            }
            for (double v : bg.gain) *g++ = targets.norm_gains ? v : 0.0;
            adam.step(params, grad);
            double* p = params.data();
            for (std::size_t l = 0; l < current.layers.size(); ++l) {
                const std::size_t cnt = detail::param_count(current.layers[l]);
                for (std::size_t q = cnt - current.layers[l].d_out; q < cnt; ++q) p[q] = std::max(p[q], floors[l]);
                p += cnt;
            }
        }
        if (!aborted) {
            unpack(current);
            const double loss = block_loss(current, x, y);
            if (std::isfinite(loss) && loss < best_loss) {
                best_loss = loss;
                res.block = current;
            }
        }
        res.trace.push_back({Phase::finetune, epoch, best_loss});
        res.epochs = epoch;
        if (aborted || !(prev > 0.0) || (prev - best_loss) / prev < config.rel_tolerance) break;
    }
    return res;
}

// Quantizes every linear of a dense block against the activations it sees in
// the dense block, keeping the dense norm gains.
template <typename Real = float>
SurrogateBlock<Real> quantize_block(const DenseBlock& dense, const Matrix& x, const QuantConfig& config,
                                    std::vector<LossTrace>* traces = nullptr) {
    const auto tape = block_forward_dense(dense.shape, dense.norm_gain, dense.weights, x);
    SurrogateBlock<Real> out;
    out.shape = dense.shape;
    out.norm_gain = dense.norm_gain;
    for (std::size_t l = 0; l < dense.weights.size(); ++l) {
        const bool last = dense.shape.wiring != Wiring::single && l + 1 == dense.weights.size();
        const Matrix& inputs = last ? tape.h : tape.u;
        auto res = quantize_layer<Real>(dense.weights[l], inputs, config);
        if (traces) traces->push_back(res.trace);
        out.layers.push_back(std::move(res.layer));
    }
    return out;
}

}  // namespace aqlm
