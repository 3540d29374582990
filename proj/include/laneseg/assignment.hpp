#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "linalg.hpp"

namespace laneseg {

/// Rows are predictions, columns are ground truths.
using CostMatrix = Matrix;

struct Assignment {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (pred, gt), ascending pred
    std::vector<std::size_t> unmatched_preds;
    std::vector<std::size_t> unmatched_gts;
    double total_cost = 0.0;

    /// gt index matched to `pred`, or -1.
    std::ptrdiff_t gt_of(std::size_t pred) const {
        for (const auto& [p, g] : pairs)
            if (p == pred) return static_cast<std::ptrdiff_t>(g);
        return -1;
    }
    /// pred index matched to `gt`, or -1.
    std::ptrdiff_t pred_of(std::size_t gt) const {
        for (const auto& [p, g] : pairs)
            if (g == gt) return static_cast<std::ptrdiff_t>(p);
        return -1;
    }
};

namespace detail {

// Shortest augmenting path with potentials, O(n^2 m), requires n <= m.
// Returns, for every row, its assigned column.
inline std::vector<std::size_t> solve_rows_le_cols(const Matrix& a) {
    const std::size_t n = a.rows;
    const std::size_t m = a.cols;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);

    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<std::size_t> row_to_col(n, 0);
    for (std::size_t j = 1; j <= m; ++j)
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

}  // namespace detail

/// Exact minimum-cost one-to-one assignment of min(R, C) pairs.
/// total_cost is summed over pairs in ascending prediction order.
inline Assignment hungarian(const CostMatrix& cost) {
    require(cost.rows >= 1 && cost.cols >= 1, "hungarian: empty cost matrix");
    require(all_finite(cost.data), "hungarian: non-finite cost entry");

    Assignment out;
    if (cost.rows <= cost.cols) {
        const auto r2c = detail::solve_rows_le_cols(cost);
        for (std::size_t r = 0; r < cost.rows; ++r) out.pairs.emplace_back(r, r2c[r]);
    } else {
        Matrix t(cost.cols, cost.rows);
        for (std::size_t r = 0; r < cost.rows; ++r)
            for (std::size_t c = 0; c < cost.cols; ++c) t(c, r) = cost(r, c);
        const auto c2r = detail::solve_rows_le_cols(t);
        for (std::size_t c = 0; c < cost.cols; ++c) out.pairs.emplace_back(c2r[c], c);
        std::sort(out.pairs.begin(), out.pairs.end());
    }

    std::vector<char> row_used(cost.rows, 0), col_used(cost.cols, 0);
    for (const auto& [r, c] : out.pairs) {
        row_used[r] = 1;
        col_used[c] = 1;
        out.total_cost += cost(r, c);
    }
    for (std::size_t r = 0; r < cost.rows; ++r)
        if (!row_used[r]) out.unmatched_preds.push_back(r);
    for (std::size_t c = 0; c < cost.cols; ++c)
        if (!col_used[c]) out.unmatched_gts.push_back(c);
    return out;
}

/// Builds the cost matrix with cost_fn(pred, gt) and solves it. Either side
/// may be empty, in which case everything is unmatched at zero cost.
template <typename Pred, typename Gt, typename CostFn>
Assignment assign(const std::vector<Pred>& preds, const std::vector<Gt>& gts, CostFn&& cost_fn) {
    if (preds.empty() || gts.empty()) {
        Assignment out;
        for (std::size_t i = 0; i < preds.size(); ++i) out.unmatched_preds.push_back(i);
        for (std::size_t j = 0; j < gts.size(); ++j) out.unmatched_gts.push_back(j);
        return out;
    }
    CostMatrix cost(preds.size(), gts.size());
    for (std::size_t i = 0; i < preds.size(); ++i)
        for (std::size_t j = 0; j < gts.size(); ++j) cost(i, j) = cost_fn(preds[i], gts[j]);
    return hungarian(cost);
}

}  // namespace laneseg
