#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aqlm/errors.hpp"

namespace aqlm {

// Dense row-major matrix of doubles. Holds weights W (d_out x d_in) and
// calibration inputs X (d_in x n).
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw InvalidInput("matrix data length " + std::to_string(data_.size()) +
                               " does not match shape " + std::to_string(rows_) + "x" +
                               std::to_string(cols_));
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw InvalidInput(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                           std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                           std::to_string(b.cols()));
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "subtract");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] - b.values()[i];
    return out;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw InvalidInput("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                           std::to_string(b.rows()) + " differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto orow = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double frobenius_sq(const Matrix& a) { return dot(a.values(), a.values()); }

// Symmetric PSD matrix X X^T of size d_in x d_in.
class GramMatrix {
public:
    GramMatrix() = default;

    // Takes ownership of a square matrix and symmetrizes it as (G + G^T) / 2.
    explicit GramMatrix(Matrix values) : values_(std::move(values)) {
        if (values_.rows() != values_.cols() || values_.rows() == 0)
            throw InvalidInput("gram matrix must be square and non-empty");
        if (!values_.all_finite()) throw InvalidInput("gram matrix has non-finite entries");
        const std::size_t n = values_.rows();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double avg = 0.5 * (values_(i, j) + values_(j, i));
                values_(i, j) = avg;
                values_(j, i) = avg;
            }
    }

    static GramMatrix identity(std::size_t n) { return GramMatrix(Matrix::identity(n)); }

    std::size_t dim() const noexcept { return values_.rows(); }
    double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }
    const Matrix& values() const noexcept { return values_; }
    std::span<const double> row(std::size_t i) const { return values_.row(i); }

    double trace() const {
        double t = 0.0;
        for (std::size_t i = 0; i < dim(); ++i) t += values_(i, i);
        return t;
    }

private:
    Matrix values_;
};

inline GramMatrix gram(const Matrix& x) {
    if (x.rows() == 0 || x.cols() == 0) throw InvalidInput("gram: calibration matrix has a zero dimension");
    if (!x.all_finite()) throw InvalidInput("gram: calibration matrix has non-finite entries");
    const std::size_t d = x.rows();
    Matrix g(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        auto xi = x.row(i);
        for (std::size_t j = i; j < d; ++j) {
            const double v = dot(xi, x.row(j));
            g(i, j) = v;
            g(j, i) = v;
        }
    }
    return GramMatrix(std::move(g));
}

// r^T G r for one row vector.
inline double row_quad(std::span<const double> r, const GramMatrix& g) {
    double s = 0.0;
    for (std::size_t p = 0; p < r.size(); ++p) {
        if (r[p] == 0.0) continue;
        s += r[p] * dot(g.row(p), r);
    }
    return s;
}

// <A G, B>_F = sum_{i,p,q} A[i][p] G[p][q] B[i][q].
inline double gram_inner(const Matrix& a, const Matrix& b, const GramMatrix& g) {
    require_same_shape(a, b, "gram_inner");
    if (a.cols() != g.dim())
        throw InvalidInput("gram_inner: matrix width " + std::to_string(a.cols()) +
                           " does not match gram dimension " + std::to_string(g.dim()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ai = a.row(i);
        auto bi = b.row(i);
        for (std::size_t p = 0; p < ai.size(); ++p) {
            if (ai[p] == 0.0) continue;
            s += ai[p] * dot(g.row(p), bi);
        }
    }
    return s;
}

// Per-row terms of the Gram-form loss; sums of these give layer_loss, so
// row-wise improvements carry over monotonically to the total.
inline double row_loss(std::span<const double> w, std::span<const double> what, const GramMatrix& g) {
    std::vector<double> r(w.size());
    for (std::size_t p = 0; p < w.size(); ++p) r[p] = w[p] - what[p];
    return row_quad(r, g);
}

inline double clamp_loss(double total, double tolerance_scale) {
    if (total < 0.0 && total >= -1e-10 * tolerance_scale) return 0.0;
    return total;
}

// ||(W - What) X||_F^2 expressed through G = X X^T.
inline double layer_loss(const Matrix& w, const Matrix& what, const GramMatrix& g) {
    require_same_shape(w, what, "layer_loss");
    if (w.cols() != g.dim())
        throw InvalidInput("layer_loss: weight width " + std::to_string(w.cols()) +
                           " does not match gram dimension " + std::to_string(g.dim()));
    double total = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) {
        total += row_loss(w.row(i), what.row(i), g);
        for (std::size_t p = 0; p < w.cols(); ++p) {
            const double d = w(i, p) - what(i, p);
            scale += d * d;
        }
    }
    return clamp_loss(total, scale * std::max(g.trace(), 1.0));
}

}  // namespace aqlm
