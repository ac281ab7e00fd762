#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "aqlm/errors.hpp"
#include "aqlm/format.hpp"
#include "aqlm/linalg.hpp"
#include "aqlm/parallel.hpp"

namespace aqlm {

// Potentials for the code MRF. Row i is encoded against the normalized target
// t_i = W_i / s_i, so for a reconstruction c (sum of selected codewords)
//
//   ||(W_i - s_i c) X||^2 = s_i^2 * ( <t_i, t_i>_G - 2 sum_p unary_p + sum_{p,q} pairwise_pq ).
//
// A code position p = (j, m) selects a codeword of codebook m placed on group j,
// i.e. zero elsewhere; its Gram products only touch the G block of group j.
// The full pairwise tensor is never materialized: only its diagonal blocks'
// diagonals (codeword self-energies) are stored, other entries are evaluated
// from G on demand.
class BeamTables {
public:
    template <typename Real>
    BeamTables(const Matrix& w, const QuantizedLayer<Real>& layer, const GramMatrix& g)
        : gram_(g),
          d_out_(layer.d_out),
          d_in_(layer.d_in),
          g_(layer.group_size()),
          groups_(layer.num_groups()),
          books_(layer.num_codebooks()),
          k_(layer.codebook_size()) {
        layer.validate();
        if (w.rows() != d_out_ || w.cols() != d_in_) throw InvalidInput("build_tables: weight shape does not match layer");
        if (g.dim() != d_in_) throw InvalidInput("build_tables: gram dimension does not match d_in");
        codewords_.resize(books_ * k_ * g_);
        for (std::size_t m = 0; m < books_; ++m)
            for (std::size_t t = 0; t < k_ * g_; ++t)
                codewords_[m * k_ * g_ + t] = static_cast<double>(layer.codebooks[m].data[t]);

        self_energy_.assign(groups_ * books_ * k_, 0.0);
        for (std::size_t j = 0; j < groups_; ++j)
            for (std::size_t m = 0; m < books_; ++m)
                for (std::size_t c = 0; c < k_; ++c)
                    self_energy_[(j * books_ + m) * k_ + c] = block_product(j, codeword(m, c), j, codeword(m, c));

        targets_ = Matrix(d_out_, d_in_);
        gram_targets_ = Matrix(d_out_, d_in_);
        row_const_.resize(d_out_);
        scale_sq_.resize(d_out_);
        for (std::size_t i = 0; i < d_out_; ++i) {
            const double s = static_cast<double>(layer.scales[i]);
            scale_sq_[i] = s * s;
            for (std::size_t p = 0; p < d_in_; ++p) targets_(i, p) = w(i, p) / s;
            for (std::size_t p = 0; p < d_in_; ++p) gram_targets_(i, p) = dot(g.row(p), targets_.row(i));
            row_const_[i] = row_quad(w.row(i), g);
        }
    }

    std::size_t d_out() const { return d_out_; }
    std::size_t d_in() const { return d_in_; }
    std::size_t group_size() const { return g_; }
    std::size_t groups() const { return groups_; }
    std::size_t books() const { return books_; }
    std::size_t codebook_size() const { return k_; }
    std::size_t positions() const { return groups_ * books_; }
    const GramMatrix& gram() const { return gram_; }

    std::span<const double> codeword(std::size_t m, std::size_t c) const {
        return {codewords_.data() + (m * k_ + c) * g_, g_};
    }
    const Matrix& targets() const { return targets_; }
    // Row i of t G, i.e. G t_i.
    std::span<const double> gram_target(std::size_t i) const { return gram_targets_.row(i); }
    // ||W_i X||^2.
    double row_const(std::size_t i) const { return row_const_[i]; }
    double scale_sq(std::size_t i) const { return scale_sq_[i]; }
    // <t_i, t_i>_G in normalized units.
    double target_energy(std::size_t i) const { return row_const_[i] / scale_sq_[i]; }

    // Pairwise diagonal: <C_m c, C_m c>_G restricted to group j.
    double self_energy(std::size_t j, std::size_t m, std::size_t c) const {
        return self_energy_[(j * books_ + m) * k_ + c];
    }

    // Unary potentials <t_i, C_m c>_G for every position (j, m) and code c,
    // laid out [(j * M + m) * K + c].
    std::vector<double> unary_row(std::size_t i) const {
        std::vector<double> u(positions() * k_);
        auto gt = gram_target(i);
        for (std::size_t j = 0; j < groups_; ++j)
            for (std::size_t m = 0; m < books_; ++m)
                for (std::size_t c = 0; c < k_; ++c) {
                    auto cw = codeword(m, c);
                    double s = 0.0;
                    for (std::size_t t = 0; t < g_; ++t) s += cw[t] * gt[j * g_ + t];
                    u[(j * books_ + m) * k_ + c] = s;
                }
        return u;
    }

    // <C_m c on group j, C_m' c' on group j'>_G.
    double pairwise(std::size_t j, std::size_t m, std::size_t c, std::size_t j2, std::size_t m2, std::size_t c2) const {
        return block_product(j, codeword(m, c), j2, codeword(m2, c2));
    }

    // Row loss ||(W_i - s_i c) X||^2 assembled from unary and pairwise potentials.
    double assembled_row_loss(std::size_t i, std::span<const std::uint16_t> codes) const {
        const auto u = unary_row(i);
        double unary = 0.0, pair = 0.0;
        const std::size_t P = positions();
        for (std::size_t p = 0; p < P; ++p) unary += u[p * k_ + codes[p]];
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t q = 0; q < P; ++q)
                pair += pairwise(p / books_, p % books_, codes[p], q / books_, q % books_, codes[q]);
        return scale_sq_[i] * (target_energy(i) - 2.0 * unary + pair);
    }

private:
    double block_product(std::size_t j, std::span<const double> a, std::size_t j2, std::span<const double> b) const {
        double s = 0.0;
        for (std::size_t t = 0; t < g_; ++t) {
            if (a[t] == 0.0) continue;
            auto grow = gram_.row(j * g_ + t);
            double inner = 0.0;
            for (std::size_t u = 0; u < g_; ++u) inner += grow[j2 * g_ + u] * b[u];
            s += a[t] * inner;
        }
        return s;
    }

    GramMatrix gram_;
    std::size_t d_out_, d_in_, g_, groups_, books_, k_;
    std::vector<double> codewords_;
    std::vector<double> self_energy_;
    Matrix targets_;
    Matrix gram_targets_;
    std::vector<double> row_const_;
    std::vector<double> scale_sq_;
};

template <typename Real>
BeamTables build_tables(const Matrix& w, const QuantizedLayer<Real>& layer, const GramMatrix& g) {
    return BeamTables(w, layer, g);
}

// One beam entry: a full code assignment for a row, G c for its reconstruction
// c, and its loss in normalized units (divide-out of s_i^2).
struct BeamCandidate {
    std::vector<std::uint16_t> codes;
    std::vector<double> gram_recon;
    double loss = 0.0;
};

struct BeamRowResult {
    std::vector<std::uint16_t> codes;
    double loss = 0.0;           // ||(W_i - s_i c) X||^2, incrementally tracked
    double input_loss = 0.0;     // same quantity for the input codes
    std::vector<BeamCandidate> final_beam;
};

namespace detail {

inline double normalized_loss_from(const BeamTables& tables, std::size_t i, std::span<const double> recon,
                                   std::span<const double> gram_recon) {
    auto gt = tables.gram_target(i);
    return dot(recon, gram_recon) - 2.0 * dot(recon, gt) + tables.target_energy(i);
}

inline BeamCandidate make_candidate(const BeamTables& tables, std::size_t i, std::span<const std::uint16_t> codes) {
    const std::size_t g = tables.group_size();
    std::vector<double> recon(tables.d_in(), 0.0);
    for (std::size_t j = 0; j < tables.groups(); ++j)
        for (std::size_t m = 0; m < tables.books(); ++m) {
            auto cw = tables.codeword(m, codes[j * tables.books() + m]);
            for (std::size_t t = 0; t < g; ++t) recon[j * g + t] += cw[t];
        }
    BeamCandidate cand;
    cand.codes.assign(codes.begin(), codes.end());
    cand.gram_recon.resize(tables.d_in());
    for (std::size_t p = 0; p < tables.d_in(); ++p) cand.gram_recon[p] = dot(tables.gram().row(p), recon);
    cand.loss = normalized_loss_from(tables, i, recon, cand.gram_recon);
    return cand;
}

struct Expansion {
    double score;
    std::uint32_t parent;
    std::uint32_t code;
};

}  // namespace detail

// Beam search over one row's codes. Positions are swept in (j ascending, m
// ascending) order; at each position every beam entry is expanded with all 2^B
// codes and the k best distinct assignments by (loss, code tuple) are kept.
// The input assignment starts the beam, so the result is never worse than it.
inline BeamRowResult beam_search_row(std::size_t i, const BeamTables& tables, std::span<const std::uint16_t> codes,
                                     std::size_t beam_size, std::size_t sweeps = 1) {
    if (beam_size < 1) throw InvalidInput("beam search: beam size must be >= 1");
    const std::size_t P = tables.positions();
    const std::size_t K = tables.codebook_size();
    const std::size_t g = tables.group_size();
    const std::size_t M = tables.books();
    if (codes.size() != P) throw InvalidInput("beam search: code row has wrong length");
    for (auto c : codes)
        if (c >= K) throw InvalidInput("beam search: input code out of range");

    const auto unary = tables.unary_row(i);
    const auto& G = tables.gram();

    std::vector<BeamCandidate> beam;
    beam.push_back(detail::make_candidate(tables, i, codes));
    const double input_loss = beam.front().loss;

    std::vector<detail::Expansion> pool;
    std::vector<double> f(g);
    std::vector<double> delta(g);

    for (std::size_t sweep = 0; sweep < sweeps; ++sweep) {
        for (std::size_t p = 0; p < P; ++p) {
            const std::size_t j = p / M;
            const std::size_t m = p % M;
            const double* u = unary.data() + p * K;
            pool.clear();
            pool.reserve(beam.size() * K);
            for (std::size_t b = 0; b < beam.size(); ++b) {
                const auto& cand = beam[b];
                const std::size_t a = cand.codes[p];
                auto ca = tables.codeword(m, a);
                // f = (G c)_j - G_jj C_a: gradient seen by group j with code a removed.
                for (std::size_t t = 0; t < g; ++t) {
                    auto grow = G.row(j * g + t);
                    double s = 0.0;
                    for (std::size_t v = 0; v < g; ++v) s += grow[j * g + v] * ca[v];
                    f[t] = cand.gram_recon[j * g + t] - s;
                }
                double ca_h = 0.0;
                for (std::size_t t = 0; t < g; ++t) ca_h += ca[t] * cand.gram_recon[j * g + t];
                const double base = cand.loss - 2.0 * ca_h + 2.0 * u[a] + tables.self_energy(j, m, a);
                for (std::size_t c = 0; c < K; ++c) {
                    double score;
                    if (c == a) {
                        score = cand.loss;
                    } else {
                        auto cb = tables.codeword(m, c);
                        double cf = 0.0;
                        for (std::size_t t = 0; t < g; ++t) cf += cb[t] * f[t];
                        score = base + 2.0 * cf - 2.0 * u[c] + tables.self_energy(j, m, c);
                    }
                    pool.push_back({score, static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c)});
                }
            }

            auto tuple_at = [&](const detail::Expansion& e, std::size_t q) -> std::uint16_t {
                return q == p ? static_cast<std::uint16_t>(e.code) : beam[e.parent].codes[q];
            };
            auto tuple_less = [&](const detail::Expansion& x, const detail::Expansion& y) {
                for (std::size_t q = 0; q < P; ++q) {
                    const auto vx = tuple_at(x, q), vy = tuple_at(y, q);
                    if (vx != vy) return vx < vy;
                }
                return false;
            };
            auto tuple_equal = [&](const detail::Expansion& x, const detail::Expansion& y) {
                if (x.code != y.code) return false;
                for (std::size_t q = 0; q < P; ++q)
                    if (q != p && beam[x.parent].codes[q] != beam[y.parent].codes[q]) return false;
                return true;
            };
            auto order = [&](const detail::Expansion& x, const detail::Expansion& y) {
                if (x.score != y.score) return x.score < y.score;
                return tuple_less(x, y);
            };

            // A tuple appears at most beam.size() times, so the first
            // beam_size * beam.size() entries hold beam_size distinct tuples.
            const std::size_t window = std::min(pool.size(), beam_size * beam.size());
            if (window < pool.size()) {
                std::nth_element(pool.begin(), pool.begin() + std::ptrdiff_t(window), pool.end(), order);
                pool.resize(window);
            }
            std::sort(pool.begin(), pool.end(), order);

            std::vector<detail::Expansion> chosen;
            for (const auto& e : pool) {
                if (chosen.size() == beam_size) break;
                bool dup = false;
                for (const auto& c : chosen)
                    if (tuple_equal(c, e)) {
                        dup = true;
                        break;
                    }
                if (!dup) chosen.push_back(e);
            }

            std::vector<BeamCandidate> next;
            next.reserve(chosen.size());
            for (const auto& e : chosen) {
                const auto& parent = beam[e.parent];
                BeamCandidate child;
                child.codes = parent.codes;
                child.gram_recon = parent.gram_recon;
                child.loss = e.score;
                const std::size_t a = parent.codes[p];
                if (e.code != a) {
                    child.codes[p] = static_cast<std::uint16_t>(e.code);
                    auto ca = tables.codeword(m, a);
                    auto cb = tables.codeword(m, e.code);
                    for (std::size_t t = 0; t < g; ++t) delta[t] = cb[t] - ca[t];
                    // G c += G[:, group j] * delta, using symmetry of G.
                    for (std::size_t t = 0; t < g; ++t) {
                        if (delta[t] == 0.0) continue;
                        auto grow = G.row(j * g + t);
                        for (std::size_t r = 0; r < tables.d_in(); ++r) child.gram_recon[r] += grow[r] * delta[t];
                    }
                }
                next.push_back(std::move(child));
            }
            beam = std::move(next);
        }
    }

    BeamRowResult out;
    out.codes = beam.front().codes;
    out.loss = beam.front().loss * tables.scale_sq(i);
    out.input_loss = input_loss * tables.scale_sq(i);
    out.final_beam.reserve(beam.size());
    for (auto& c : beam) {
        c.loss *= tables.scale_sq(i);
        out.final_beam.push_back(std::move(c));
    }
    return out;
}

struct CodeUpdateStats {
    std::size_t rows_changed = 0;
    double loss_before = 0.0;
    double loss_after = 0.0;
};

namespace detail {

template <typename Real>
std::vector<double> dequantize_row(const QuantizedLayer<Real>& layer, std::size_t i, std::span<const std::uint16_t> codes) {
    const std::size_t g = layer.group_size();
    const std::size_t M = layer.num_codebooks();
    std::vector<double> out(layer.d_in);
    std::vector<Real> buf(g);
    const Real s = layer.scales[i];
    for (std::size_t j = 0; j < layer.num_groups(); ++j) {
        for (std::size_t t = 0; t < g; ++t) buf[t] = Real(0);
        for (std::size_t m = 0; m < M; ++m) {
            auto cw = layer.codebooks[m].codeword(codes[j * M + m]);
            for (std::size_t t = 0; t < g; ++t) buf[t] += cw[t];
        }
        for (std::size_t t = 0; t < g; ++t) out[j * g + t] = static_cast<double>(Real(s * buf[t]));
    }
    return out;
}

}  // namespace detail

// Phase 1: re-encode every row by beam search. Rows are independent; the result
// does not depend on `workers`. A row's codes are replaced only when the exact
// reconstruction loss strictly decreases, so layer_loss never increases.
template <typename Real>
QuantizedLayer<Real> update_codes(const QuantizedLayer<Real>& layer, const Matrix& w, const GramMatrix& g,
                                  std::size_t beam_size, std::size_t workers = 1, std::size_t sweeps = 1,
                                  CodeUpdateStats* stats = nullptr) {
    const BeamTables tables(w, layer, g);
    QuantizedLayer<Real> out = layer;
    std::vector<double> before(layer.d_out), after(layer.d_out);
    std::vector<std::uint8_t> changed(layer.d_out, 0);
    parallel_for(layer.d_out, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            auto current = layer.codes.row(i);
            const auto res = beam_search_row(i, tables, current, beam_size, sweeps);
            const auto old_row = detail::dequantize_row(layer, i, current);
            before[i] = row_loss(w.row(i), old_row, g);
            after[i] = before[i];
            if (std::equal(res.codes.begin(), res.codes.end(), current.begin())) continue;
            const auto new_row = detail::dequantize_row(layer, i, res.codes);
            const double candidate = row_loss(w.row(i), new_row, g);
            if (candidate < before[i]) {
                std::copy(res.codes.begin(), res.codes.end(), out.codes.row(i).begin());
                after[i] = candidate;
                changed[i] = 1;
            }
        }
    });
    if (stats) {
        stats->rows_changed = 0;
        stats->loss_before = 0.0;
        stats->loss_after = 0.0;
        for (std::size_t i = 0; i < layer.d_out; ++i) {
            stats->rows_changed += changed[i];
            stats->loss_before += before[i];
            stats->loss_after += after[i];
        }
    }
    return out;
}

}  // namespace aqlm
