#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "aqlm/config.hpp"
#include "aqlm/errors.hpp"
#include "aqlm/format.hpp"
#include "aqlm/linalg.hpp"

namespace aqlm {

// Points are stored point-major: point p occupies [p * dim, (p + 1) * dim).
struct KMeansResult {
    std::size_t dim = 0;
    std::vector<double> centroids;          // K x dim
    std::vector<std::uint32_t> assignments;  // one per point
    double inertia = 0.0;
    std::vector<double> inertia_history;     // after every assignment step
};

namespace detail {

inline double sq_dist(const double* a, const double* b, std::size_t dim) {
    double s = 0.0;
    for (std::size_t t = 0; t < dim; ++t) {
        const double d = a[t] - b[t];
        s += d * d;
    }
    return s;
}

// Nearest centroid by squared distance, lowest index on ties.
inline double assign_points(std::span<const double> points, std::size_t dim, std::span<const double> centroids,
                            std::size_t k, std::vector<std::uint32_t>& assignments, std::vector<double>& dists) {
    const std::size_t n = points.size() / dim;
    double inertia = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        double best = std::numeric_limits<double>::infinity();
        std::uint32_t arg = 0;
        for (std::size_t c = 0; c < k; ++c) {
            const double d = sq_dist(points.data() + p * dim, centroids.data() + c * dim, dim);
            if (d < best) {
                best = d;
                arg = static_cast<std::uint32_t>(c);
            }
        }
        assignments[p] = arg;
        dists[p] = best;
        inertia += best;
    }
    return inertia;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding. Empty clusters are reseeded to the
// point farthest from its centroid. Stops after `max_iters` updates or when
// assignments no longer change.
inline KMeansResult kmeans(std::span<const double> points, std::size_t dim, std::size_t k, std::uint64_t seed,
                           std::size_t max_iters = 25) {
    if (dim == 0 || points.empty() || points.size() % dim != 0) throw InvalidInput("kmeans: need at least one point");
    if (k == 0) throw InvalidInput("kmeans: K must be >= 1");
    const std::size_t n = points.size() / dim;
    std::mt19937_64 rng(seed);

    KMeansResult res;
    res.dim = dim;
    res.centroids.assign(k * dim, 0.0);
    auto set_centroid = [&](std::size_t c, std::size_t p) {
        std::copy_n(points.data() + p * dim, dim, res.centroids.data() + c * dim);
    };

    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    set_centroid(0, first);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            d2[p] = std::min(d2[p], detail::sq_dist(points.data() + p * dim, res.centroids.data() + (c - 1) * dim, dim));
            total += d2[p];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double target = std::uniform_real_distribution<double>(0.0, total)(rng);
            pick = n - 1;
            for (std::size_t p = 0; p < n; ++p) {
                target -= d2[p];
                if (target < 0.0 && d2[p] > 0.0) {
                    pick = p;
                    break;
                }
            }
            if (!(d2[pick] > 0.0))
                for (std::size_t p = 0; p < n; ++p)
                    if (d2[p] > 0.0) pick = p;
        } else {
            // Every point already coincides with a centroid; duplicates are allowed.
            pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        }
        set_centroid(c, pick);
    }

    res.assignments.assign(n, 0);
    std::vector<double> dists(n, 0.0);
    res.inertia = detail::assign_points(points, dim, res.centroids, k, res.assignments, dists);
    res.inertia_history.push_back(res.inertia);

    std::vector<double> sums(k * dim);
    std::vector<std::size_t> counts(k);
    std::vector<std::uint32_t> previous;
    for (std::size_t it = 0; it < max_iters; ++it) {
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t p = 0; p < n; ++p) {
            const std::size_t c = res.assignments[p];
            ++counts[c];
            for (std::size_t t = 0; t < dim; ++t) sums[c * dim + t] += points[p * dim + t];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t t = 0; t < dim; ++t) res.centroids[c * dim + t] = sums[c * dim + t] / double(counts[c]);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = 0;
            for (std::size_t p = 1; p < n; ++p)
                if (dists[p] > dists[far]) far = p;
            set_centroid(c, far);
            dists[far] = 0.0;
        }
        previous = res.assignments;
        res.inertia = detail::assign_points(points, dim, res.centroids, k, res.assignments, dists);
        res.inertia_history.push_back(res.inertia);
        if (previous == res.assignments) break;
    }
    return res;
}

struct InitResult {
    // Residual energy (in scale-normalized units) left after each added codebook.
    std::vector<double> residual_inertia;
};

// Per-row scales s_i = ||W_i||_2, clamped from below to scale_floor(max|W|).
inline std::vector<double> initial_scales(const Matrix& w) {
    const double floor = scale_floor(w.max_abs());
    std::vector<double> s(w.rows());
    for (std::size_t i = 0; i < w.rows(); ++i) s[i] = std::max(std::sqrt(dot(w.row(i), w.row(i))), floor);
    return s;
}

namespace detail {

// Groups of the scale-normalized rows W_i / s_i as k-means points, ordered (i, j).
template <typename Real>
std::vector<double> normalized_groups(const Matrix& w, const QuantizedLayer<Real>& layer) {
    std::vector<double> pts(w.size());
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const double s = static_cast<double>(layer.scales[i]);
        for (std::size_t p = 0; p < w.cols(); ++p) pts[i * w.cols() + p] = w(i, p) / s;
    }
    return pts;
}

template <typename Real>
QuantizedLayer<Real> layer_with_scales(const Matrix& w, const QuantConfig& config) {
    config.validate_for(w.cols());
    if (w.rows() == 0) throw InvalidInput("init: weight matrix has no rows");
    if (!w.all_finite()) throw InvalidInput("init: weights contain non-finite values");
    QuantizedLayer<Real> layer(config, w.rows(), w.cols());
    const auto s = initial_scales(w);
    const double floor = scale_floor(w.max_abs());
    for (std::size_t i = 0; i < w.rows(); ++i) {
        Real v = static_cast<Real>(s[i]);
        if (!(static_cast<double>(v) >= floor)) v = static_cast<Real>(floor);
        if (!(v > Real(0))) v = std::numeric_limits<Real>::min();
        layer.scales[i] = v;
    }
    return layer;
}

}  // namespace detail

// Residual k-means: codebook m is fit to what codebooks 0..m-1 left unexplained.
template <typename Real = float>
QuantizedLayer<Real> residual_kmeans_init(const Matrix& w, const QuantConfig& config, InitResult* report = nullptr) {
    auto layer = detail::layer_with_scales<Real>(w, config);
    const std::size_t g = config.group_size;
    const std::size_t k = config.codebook_size();
    std::vector<double> residual = detail::normalized_groups(w, layer);
    const std::size_t n = residual.size() / g;
    for (std::size_t m = 0; m < config.num_codebooks; ++m) {
        const auto km = kmeans(residual, g, k, config.seed * 1000003ULL + m, config.kmeans_iters);
        auto& cb = layer.codebooks[m];
        for (std::size_t t = 0; t < cb.data.size(); ++t) cb.data[t] = static_cast<Real>(km.centroids[t]);
        double energy = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            const std::uint32_t c = km.assignments[p];
            layer.codes.data[p * config.num_codebooks + m] = static_cast<std::uint16_t>(c);
            auto cw = cb.codeword(c);
            for (std::size_t t = 0; t < g; ++t) {
                residual[p * g + t] -= static_cast<double>(cw[t]);
                energy += residual[p * g + t] * residual[p * g + t];
            }
        }
        if (report) report->residual_inertia.push_back(energy);
    }
    return layer;
}

// Ablation baseline: uniform random codes, Gaussian codebooks matched to the
// RMS of the normalized weights.
template <typename Real = float>
QuantizedLayer<Real> random_init(const Matrix& w, const QuantConfig& config) {
    auto layer = detail::layer_with_scales<Real>(w, config);
    const auto pts = detail::normalized_groups(w, layer);
    const double rms = std::sqrt(dot(pts, pts) / double(pts.size()));
    std::mt19937_64 rng(config.seed * 7919ULL + 17);
    std::normal_distribution<double> normal(0.0, rms / std::sqrt(double(config.num_codebooks)));
    for (auto& cb : layer.codebooks)
        for (auto& v : cb.data) v = static_cast<Real>(normal(rng));
    std::uniform_int_distribution<std::uint32_t> code(0, std::uint32_t(config.codebook_size() - 1));
    for (auto& c : layer.codes.data) c = static_cast<std::uint16_t>(code(rng));
    return layer;
}

}  // namespace aqlm
