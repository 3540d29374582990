#pragma once

// Independent brute-force references used by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "laneseg/core.hpp"
#include "laneseg/lane_attention.hpp"
#include "laneseg/linalg.hpp"

namespace oracle {

using namespace laneseg;

/// Minimum over every monotone coupling path of the maximum pair distance,
/// by explicit path enumeration.
inline double frechet_bruteforce(const Polyline3& p, const Polyline3& q) {
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double worst) {
        worst = std::max(worst, distance(p[i], q[j]));
        if (worst >= best) return;
        if (i + 1 == p.size() && j + 1 == q.size()) {
            best = worst;
            return;
        }
        if (i + 1 < p.size()) walk(i + 1, j, worst);
        if (j + 1 < q.size()) walk(i, j + 1, worst);
        if (i + 1 < p.size() && j + 1 < q.size()) walk(i + 1, j + 1, worst);
    };
    walk(0, 0, 0.0);
    return best;
}

/// Exhaustive minimum-cost matching of min(R, C) pairs. Each candidate is
/// summed in ascending prediction (row) order, the same order the solver
/// reports, so optima compare bit for bit.
inline double assignment_bruteforce(const Matrix& c) {
    const bool transpose = c.rows > c.cols;
    const std::size_t small = transpose ? c.cols : c.rows;
    const std::size_t large = transpose ? c.rows : c.cols;
    std::vector<std::size_t> pick(small);
    std::vector<bool> used(large, false);
    std::vector<std::ptrdiff_t> row_to_col(c.rows);
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
        if (i == small) {
            std::fill(row_to_col.begin(), row_to_col.end(), -1);
            for (std::size_t k = 0; k < small; ++k) {
                if (transpose)
                    row_to_col[pick[k]] = static_cast<std::ptrdiff_t>(k);
                else
                    row_to_col[k] = static_cast<std::ptrdiff_t>(pick[k]);
            }
            double sum = 0.0;
            for (std::size_t r = 0; r < c.rows; ++r)
                if (row_to_col[r] >= 0) sum += c(r, static_cast<std::size_t>(row_to_col[r]));
            best = std::min(best, sum);
            return;
        }
        for (std::size_t j = 0; j < large; ++j) {
            if (used[j]) continue;
            used[j] = true;
            pick[i] = j;
            rec(i + 1);
            used[j] = false;
        }
    };
    rec(0);
    return best;
}

/// Symmetric mean-of-minimum distance, written independently.
inline double chamfer_naive(const std::vector<Point3>& a, const std::vector<Point3>& b) {
    auto one_way = [](const std::vector<Point3>& x, const std::vector<Point3>& y) {
        double s = 0.0;
        for (const auto& p : x) {
            double m = std::numeric_limits<double>::infinity();
            for (const auto& q : y)
                m = std::min(m, std::sqrt((p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) +
                                          (p.z - q.z) * (p.z - q.z)));
            s += m;
        }
        return s / static_cast<double>(x.size());
    };
    return 0.5 * (one_way(a, b) + one_way(b, a));
}

/// Lane attention evaluated term by term: bilinear sampling as a tent-kernel
/// sum over every grid cell, explicit softmax, explicit projections.
inline Vector lane_attention_naive(const Vector& q, const RefPoints& refs, const BevGrid& grid,
                                   const AttentionParams& P) {
    const std::size_t M = P.M, K = P.K, C = P.C, cv = C / M;
    const double H = static_cast<double>(grid.H()), W = static_cast<double>(grid.W());
    Vector out(C, 0.0);
    for (std::size_t m = 0; m < M; ++m) {
        std::vector<double> logit(K), a(K);
        for (std::size_t k = 0; k < K; ++k) {
            logit[k] = P.attn_bias[m * K + k];
            for (std::size_t c = 0; c < C; ++c) logit[k] += P.attn_weight(m * K + k, c) * q[c];
        }
        const double mx = *std::max_element(logit.begin(), logit.end());
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += std::exp(logit[k] - mx);
        for (std::size_t k = 0; k < K; ++k) a[k] = std::exp(logit[k] - mx) / z;

        std::vector<double> pooled(C, 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            const std::size_t row = 2 * (m * K + k);
            double dr = P.offset_bias[row], dc = P.offset_bias[row + 1];
            for (std::size_t c = 0; c < C; ++c) {
                dr += P.offset_weight(row, c) * q[c];
                dc += P.offset_weight(row + 1, c) * q[c];
            }
            const double r = (refs.points[m].u + dr / H) * H - 0.5;
            const double s = (refs.points[m].v + dc / W) * W - 0.5;
            for (std::size_t h = 0; h < grid.H(); ++h) {
                const double wr = std::max(0.0, 1.0 - std::abs(r - static_cast<double>(h)));
                if (wr == 0.0) continue;
                for (std::size_t w = 0; w < grid.W(); ++w) {
                    const double wc = std::max(0.0, 1.0 - std::abs(s - static_cast<double>(w)));
                    if (wc == 0.0) continue;
                    for (std::size_t c = 0; c < C; ++c) pooled[c] += a[k] * wr * wc * grid.at(h, w, c);
                }
            }
        }
        std::vector<double> head(cv, 0.0);
        for (std::size_t i = 0; i < cv; ++i)
            for (std::size_t c = 0; c < C; ++c) head[i] += P.value_proj[m](i, c) * pooled[c];
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < cv; ++i) out[c] += P.output_proj[m](c, i) * head[i];
    }
    return out;
}

}  // namespace oracle
