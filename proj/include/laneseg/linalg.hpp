#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace laneseg {

using Vector = std::vector<double>;

// Dense row-major matrix. Storage is exposed so that optimizers and
// finite-difference checks can walk every entry uniformly.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument(what);
}

// y = A x
inline Vector matvec(const Matrix& a, std::span<const double> x) {
    require(a.cols == x.size(), "matvec: dimension mismatch");
    Vector y(a.rows, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r) {
        double s = 0.0;
        const double* ar = a.data.data() + r * a.cols;
        for (std::size_t c = 0; c < a.cols; ++c) s += ar[c] * x[c];
        y[r] = s;
    }
    return y;
}

// x += A^T y
inline void add_matTvec(const Matrix& a, std::span<const double> y, std::span<double> x) {
    assert(a.rows == y.size() && a.cols == x.size());
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double yr = y[r];
        if (yr == 0.0) continue;
        const double* ar = a.data.data() + r * a.cols;
        for (std::size_t c = 0; c < a.cols; ++c) x[c] += ar[c] * yr;
    }
}

// G += u v^T
inline void add_outer(Matrix& g, std::span<const double> u, std::span<const double> v) {
    assert(g.rows == u.size() && g.cols == v.size());
    for (std::size_t r = 0; r < g.rows; ++r) {
        const double ur = u[r];
        if (ur == 0.0) continue;
        double* gr = g.data.data() + r * g.cols;
        for (std::size_t c = 0; c < g.cols; ++c) gr[c] += ur * v[c];
    }
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Vector softmax(std::span<const double> logits) {
    Vector out(logits.size());
    if (logits.empty()) return out;
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace laneseg
