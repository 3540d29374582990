#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "core.hpp"
#include "geometry.hpp"
#include "linalg.hpp"

namespace laneseg {

/// H x W x C feature field over a BEV rectangle, row-major (h, w, c).
struct BevGrid {
    GridSpec spec;
    std::size_t C = 0;
    std::vector<double> data;

    BevGrid() = default;
    BevGrid(GridSpec s, std::size_t channels, double fill = 0.0)
        : spec(s), C(channels), data(s.H * s.W * channels, fill) {}

    std::size_t H() const { return spec.H; }
    std::size_t W() const { return spec.W; }
    double& at(std::size_t h, std::size_t w, std::size_t c) { return data[(h * spec.W + w) * C + c]; }
    double at(std::size_t h, std::size_t w, std::size_t c) const { return data[(h * spec.W + w) * C + c]; }
};

/// Normalized BEV location: u runs along x (grid rows), v along y (grid
/// columns), both in [0,1] over the range.
struct NormPoint {
    double u = 0.0;
    double v = 0.0;
    friend bool operator==(const NormPoint&, const NormPoint&) = default;
};

/// One reference point per head.
struct RefPoints {
    std::vector<NormPoint> points;
};

/// Lane-attention weights. Offsets are produced in grid-cell units.
struct AttentionParams {
    std::size_t M = 8;   // heads
    std::size_t K = 32;  // sampling locations per head
    std::size_t C = 0;   // channels
    std::vector<Matrix> value_proj;   // per head, Cv x C
    std::vector<Matrix> output_proj;  // per head, C x Cv
    Matrix offset_weight;             // (M*K*2) x C, rows (m, k, {row, col})
    Vector offset_bias;               // M*K*2
    Matrix attn_weight;               // (M*K) x C
    Vector attn_bias;                 // M*K

    std::size_t head_dim() const { return C / M; }

    static AttentionParams zeros(std::size_t heads, std::size_t points, std::size_t channels) {
        require(heads >= 1 && points >= 1 && channels >= 1, "AttentionParams: empty dimension");
        require(channels % heads == 0, "AttentionParams: channels must be divisible by heads");
        AttentionParams p;
        p.M = heads;
        p.K = points;
        p.C = channels;
        const std::size_t cv = channels / heads;
        p.value_proj.assign(heads, Matrix(cv, channels));
        p.output_proj.assign(heads, Matrix(channels, cv));
        p.offset_weight = Matrix(heads * points * 2, channels);
        p.offset_bias.assign(heads * points * 2, 0.0);
        p.attn_weight = Matrix(heads * points, channels);
        p.attn_bias.assign(heads * points, 0.0);
        return p;
    }

    /// Visits every parameter tensor as a flat span.
    template <typename Fn>
    void for_each_tensor(Fn&& fn) {
        for (auto& m : value_proj) fn(std::span<double>(m.data));
        for (auto& m : output_proj) fn(std::span<double>(m.data));
        fn(std::span<double>(offset_weight.data));
        fn(std::span<double>(offset_bias));
        fn(std::span<double>(attn_weight.data));
        fn(std::span<double>(attn_bias));
    }

    void check() const {
        require(C % M == 0 && C >= M, "AttentionParams: channels must be divisible by heads");
        require(value_proj.size() == M && output_proj.size() == M, "AttentionParams: per-head projection count");
        for (std::size_t m = 0; m < M; ++m) {
            require(value_proj[m].rows == head_dim() && value_proj[m].cols == C, "AttentionParams: value_proj shape");
            require(output_proj[m].rows == C && output_proj[m].cols == head_dim(),
                    "AttentionParams: output_proj shape");
        }
        require(offset_weight.rows == M * K * 2 && offset_weight.cols == C && offset_bias.size() == M * K * 2,
                "AttentionParams: offset projection shape");
        require(attn_weight.rows == M * K && attn_weight.cols == C && attn_bias.size() == M * K,
                "AttentionParams: attention projection shape");
    }
};

struct AttentionGradients {
    Vector query;
    Vector grid;  // same layout as BevGrid::data
    AttentionParams params;
};

namespace detail {

struct BilinearTap {
    std::array<std::ptrdiff_t, 4> h;
    std::array<std::ptrdiff_t, 4> w;
    std::array<double, 4> weight;
    std::array<double, 4> d_row;  // d weight / d continuous row
    std::array<double, 4> d_col;
};

// Continuous cell coordinates put cell centers at integers.
inline BilinearTap bilinear_tap(const GridSpec& spec, NormPoint p) {
    const double r = p.u * static_cast<double>(spec.H) - 0.5;
    const double c = p.v * static_cast<double>(spec.W) - 0.5;
    const double r0 = std::floor(r), c0 = std::floor(c);
    const double fr = r - r0, fc = c - c0;
    const auto hi = static_cast<std::ptrdiff_t>(r0);
    const auto wi = static_cast<std::ptrdiff_t>(c0);
    BilinearTap t;
    t.h = {hi, hi, hi + 1, hi + 1};
    t.w = {wi, wi + 1, wi, wi + 1};
    t.weight = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
    t.d_row = {-(1 - fc), -fc, 1 - fc, fc};
    t.d_col = {-(1 - fr), 1 - fr, -fr, fr};
    return t;
}

inline bool in_grid(const GridSpec& spec, std::ptrdiff_t h, std::ptrdiff_t w) {
    return h >= 0 && w >= 0 && h < static_cast<std::ptrdiff_t>(spec.H) && w < static_cast<std::ptrdiff_t>(spec.W);
}

inline std::size_t cell_offset(const BevGrid& g, std::ptrdiff_t h, std::ptrdiff_t w) {
    return (static_cast<std::size_t>(h) * g.spec.W + static_cast<std::size_t>(w)) * g.C;
}

}  // namespace detail

/// Bilinear sample with zero padding outside the grid.
inline Vector bilinear(const BevGrid& grid, NormPoint p) {
    Vector out(grid.C, 0.0);
    const auto tap = detail::bilinear_tap(grid.spec, p);
    for (int k = 0; k < 4; ++k) {
        if (!detail::in_grid(grid.spec, tap.h[k], tap.w[k]) || tap.weight[k] == 0.0) continue;
        const double* cell = grid.data.data() + detail::cell_offset(grid, tap.h[k], tap.w[k]);
        for (std::size_t c = 0; c < grid.C; ++c) out[c] += tap.weight[k] * cell[c];
    }
    return out;
}

/// Sampling offsets (cell units) and per-head softmax weights for a query.
struct AttentionPlan {
    Vector offsets;  // M*K*2
    Vector weights;  // M*K, softmax over k within each head
    std::vector<NormPoint> locations;  // M*K
};

inline AttentionPlan plan_attention(std::span<const double> query, const RefPoints& refs, const GridSpec& spec,
                                    const AttentionParams& params) {
    params.check();
    require(query.size() == params.C, "lane_attn: query size differs from channel count");
    require(refs.points.size() == params.M, "lane_attn: need one reference point per head");
    AttentionPlan plan;
    plan.offsets = matvec(params.offset_weight, query);
    axpy(1.0, params.offset_bias, plan.offsets);
    Vector logits = matvec(params.attn_weight, query);
    axpy(1.0, params.attn_bias, logits);
    plan.weights.resize(params.M * params.K);
    plan.locations.resize(params.M * params.K);
    for (std::size_t m = 0; m < params.M; ++m) {
        const auto head = softmax(std::span<const double>(logits).subspan(m * params.K, params.K));
        for (std::size_t k = 0; k < params.K; ++k) {
            const std::size_t mk = m * params.K + k;
            plan.weights[mk] = head[k];
            plan.locations[mk] = {refs.points[m].u + plan.offsets[2 * mk] / static_cast<double>(spec.H),
                                  refs.points[m].v + plan.offsets[2 * mk + 1] / static_cast<double>(spec.W)};
        }
    }
    return plan;
}

/// Lane attention for one query:
///   sum_m W_m [ sum_k a_mk * W'_m * bilinear(grid, p_m + dp_mk) ]
/// with dp and the attention logits linear in the query and a softmaxed over
/// k within each head.
inline Vector lane_attn_forward(std::span<const double> query, const RefPoints& refs, const BevGrid& grid,
                                const AttentionParams& params) {
    require(grid.C == params.C, "lane_attn: grid channels differ from params");
    const auto plan = plan_attention(query, refs, grid.spec, params);
    Vector out(params.C, 0.0);
    Vector pooled(params.C);
    for (std::size_t m = 0; m < params.M; ++m) {
        std::fill(pooled.begin(), pooled.end(), 0.0);
        for (std::size_t k = 0; k < params.K; ++k) {
            const std::size_t mk = m * params.K + k;
            axpy(plan.weights[mk], bilinear(grid, plan.locations[mk]), pooled);
        }
        const Vector head = matvec(params.value_proj[m], pooled);
        axpy(1.0, matvec(params.output_proj[m], head), out);
    }
    return out;
}

/// Gradients of dot(upstream, lane_attn_forward(...)) with respect to the
/// query, the grid values and every parameter. Reference points are inputs
/// and receive no gradient.
inline AttentionGradients lane_attn_backward(std::span<const double> query, const RefPoints& refs, const BevGrid& grid,
                                             const AttentionParams& params, std::span<const double> upstream) {
    require(grid.C == params.C, "lane_attn: grid channels differ from params");
    require(upstream.size() == params.C, "lane_attn: upstream size differs from channel count");
    const auto plan = plan_attention(query, refs, grid.spec, params);
    const std::size_t M = params.M, K = params.K, C = params.C;

    AttentionGradients g;
    g.query.assign(C, 0.0);
    g.grid.assign(grid.data.size(), 0.0);
    g.params = AttentionParams::zeros(M, K, C);

    Vector d_offsets(M * K * 2, 0.0);
    Vector d_logits(M * K, 0.0);
    std::vector<Vector> samples(K);
    Vector pooled(C), d_pooled(C);

    for (std::size_t m = 0; m < M; ++m) {
        std::fill(pooled.begin(), pooled.end(), 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            samples[k] = bilinear(grid, plan.locations[m * K + k]);
            axpy(plan.weights[m * K + k], samples[k], pooled);
        }
        const Vector head = matvec(params.value_proj[m], pooled);

        // out += W_m head
        add_outer(g.params.output_proj[m], upstream, head);
        Vector d_head(params.head_dim(), 0.0);
        add_matTvec(params.output_proj[m], upstream, d_head);

        // head = W'_m pooled
        add_outer(g.params.value_proj[m], d_head, pooled);
        std::fill(d_pooled.begin(), d_pooled.end(), 0.0);
        add_matTvec(params.value_proj[m], d_head, d_pooled);

        // pooled = sum_k a_k s_k; softmax backward within the head
        Vector d_a(K);
        double weighted = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            d_a[k] = dot(d_pooled, samples[k]);
            weighted += plan.weights[m * K + k] * d_a[k];
        }
        for (std::size_t k = 0; k < K; ++k) {
            const std::size_t mk = m * K + k;
            d_logits[mk] = plan.weights[mk] * (d_a[k] - weighted);

            // s_k = bilinear(grid, loc_k); d loc (cell units) from the tap slopes
            const double a = plan.weights[mk];
            const auto tap = detail::bilinear_tap(grid.spec, plan.locations[mk]);
            double d_row = 0.0, d_col = 0.0;
            for (int t = 0; t < 4; ++t) {
                if (!detail::in_grid(grid.spec, tap.h[t], tap.w[t])) continue;
                const std::size_t off = detail::cell_offset(grid, tap.h[t], tap.w[t]);
                const double* cell = grid.data.data() + off;
                double proj = 0.0;
                for (std::size_t c = 0; c < C; ++c) {
                    g.grid[off + c] += a * tap.weight[t] * d_pooled[c];
                    proj += d_pooled[c] * cell[c];
                }
                d_row += a * tap.d_row[t] * proj;
                d_col += a * tap.d_col[t] * proj;
            }
            d_offsets[2 * mk] = d_row;
            d_offsets[2 * mk + 1] = d_col;
        }
    }

    add_outer(g.params.offset_weight, d_offsets, query);
    g.params.offset_bias = d_offsets;
    add_matTvec(params.offset_weight, d_offsets, g.query);
    add_outer(g.params.attn_weight, d_logits, query);
    g.params.attn_bias = d_logits;
    add_matTvec(params.attn_weight, d_logits, g.query);
    return g;
}

/// Sampling-offset prior: location k of every head sits on ring k / 8
/// (radius ring+1 cells) in direction (k mod 8) * 45 degrees. K = 32 gives
/// eight directions by four radii; other K fill rings in order and leave
/// the outer ring partial. Offset weights are zeroed.
inline AttentionParams init_sampling_offsets(AttentionParams params) {
    params.check();
    std::fill(params.offset_weight.data.begin(), params.offset_weight.data.end(), 0.0);
    for (std::size_t m = 0; m < params.M; ++m) {
        for (std::size_t k = 0; k < params.K; ++k) {
            const double radius = static_cast<double>(k / 8 + 1);
            const double angle = static_cast<double>(k % 8) * std::numbers::pi / 4.0;
            const std::size_t mk = m * params.K + k;
            params.offset_bias[2 * mk] = radius * std::cos(angle);
            params.offset_bias[2 * mk + 1] = radius * std::sin(angle);
        }
    }
    return params;
}

/// Heads-to-regions placement: M/2 points along the left boundary and M/2
/// along the right, at arc-length fractions (2i+1)/M, in normalized
/// coordinates. Heads [0, M/2) take the left boundary.
inline RefPoints distribute_reference_points(const LaneSegment& segment, std::size_t heads, const GridSpec& spec) {
    require(heads >= 2 && heads % 2 == 0, "distribute_reference_points: head count must be even");
    const std::size_t half = heads / 2;
    RefPoints refs;
    refs.points.reserve(heads);
    for (const auto* line : {&segment.left_boundary, &segment.right_boundary}) {
        for (std::size_t i = 0; i < half; ++i) {
            const double t = static_cast<double>(2 * i + 1) / static_cast<double>(heads);
            const Point2 n = spec.normalize(point_at_fraction(*line, t));
            refs.points.push_back({n.x, n.y});
        }
    }
    return refs;
}

/// Learned linear map from the positional query to reference points.
struct RefProjection {
    Matrix weight;  // (2 * points) x C
    Vector bias;
};

/// First-layer strategy: one sigmoid-squashed point from a 2-output
/// projection, shared by all heads.
inline RefPoints identical_init(std::span<const double> positional_query, const RefProjection& proj,
                                std::size_t heads) {
    require(proj.weight.rows == 2 && proj.bias.size() == 2, "identical_init: projection must have 2 outputs");
    Vector raw = matvec(proj.weight, positional_query);
    axpy(1.0, proj.bias, raw);
    const NormPoint p{sigmoid(raw[0]), sigmoid(raw[1])};
    return RefPoints{std::vector<NormPoint>(heads, p)};
}

/// Conventional strategy for comparison: a separate point per head from a
/// 2M-output projection.
inline RefPoints distributed_init(std::span<const double> positional_query, const RefProjection& proj,
                                  std::size_t heads) {
    require(proj.weight.rows == 2 * heads && proj.bias.size() == 2 * heads,
            "distributed_init: projection must have 2 outputs per head");
    Vector raw = matvec(proj.weight, positional_query);
    axpy(1.0, proj.bias, raw);
    RefPoints refs;
    for (std::size_t m = 0; m < heads; ++m) refs.points.push_back({sigmoid(raw[2 * m]), sigmoid(raw[2 * m + 1])});
    return refs;
}

/// Sum over both axes of the per-axis variance of the head reference points.
/// Deviations are taken from the first point, so identical points give
/// exactly zero.
inline double head_variance(const RefPoints& refs) {
    if (refs.points.empty()) return 0.0;
    const NormPoint o = refs.points.front();
    double mu = 0.0, mv = 0.0;
    for (const auto& p : refs.points) {
        mu += p.u - o.u;
        mv += p.v - o.v;
    }
    const double n = static_cast<double>(refs.points.size());
    mu /= n;
    mv /= n;
    double var = 0.0;
    for (const auto& p : refs.points) {
        const double du = p.u - o.u - mu, dv = p.v - o.v - mv;
        var += du * du + dv * dv;
    }
    return var / n;
}

}  // namespace laneseg
