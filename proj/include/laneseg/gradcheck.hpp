#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lane_attention.hpp"
#include "parallel.hpp"
#include "predictor.hpp"
#include "scenegen.hpp"

namespace laneseg {

struct GradTolerance {
    double step = 1e-5;
    double rel = 1e-4;
    double abs = 1e-7;
    // configurations with a bilinear kink or ReLU hinge closer than this are redrawn
    double kink_margin = 1e-3;
};

struct GradStats {
    std::size_t checked = 0;
    std::size_t failed = 0;
    double max_abs_err = 0.0;
    std::vector<std::string> failures;  // first few offending partials

    bool ok() const { return failed == 0; }

    void merge(const GradStats& o) {
        checked += o.checked;
        failed += o.failed;
        max_abs_err = std::max(max_abs_err, o.max_abs_err);
        for (const auto& f : o.failures)
            if (failures.size() < 20) failures.push_back(f);
    }
};

inline bool partial_ok(double analytic, double numeric, const GradTolerance& tol) {
    const double err = std::abs(analytic - numeric);
    return err <= tol.abs || err <= tol.rel * std::max(std::abs(analytic), std::abs(numeric));
}

/// Central differences of f over every entry of x, compared with `analytic`.
/// x is restored exactly after each probe.
template <typename F>
void fd_compare(std::span<double> x, std::span<const double> analytic, F&& f, const std::string& label,
                const GradTolerance& tol, GradStats& stats) {
    require(x.size() == analytic.size(), "fd_compare: gradient size mismatch for " + label);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + tol.step;
        const double fp = f();
        x[i] = saved - tol.step;
        const double fm = f();
        x[i] = saved;
        const double numeric = (fp - fm) / (2.0 * tol.step);
        ++stats.checked;
        stats.max_abs_err = std::max(stats.max_abs_err, std::abs(numeric - analytic[i]));
        if (!partial_ok(analytic[i], numeric, tol)) {
            ++stats.failed;
            if (stats.failures.size() < 20) {
                char buf[160];
                std::snprintf(buf, sizeof buf, "%s[%zu]: analytic %.10g numeric %.10g", label.c_str(), i,
                              analytic[i], numeric);
                stats.failures.emplace_back(buf);
            }
        }
    }
}

/// Compares every tensor of a parameter struct with its gradient struct.
template <typename P, typename F>
void fd_compare_params(P& params, P& grads, F&& f, const std::string& label, const GradTolerance& tol,
                       GradStats& stats) {
    std::vector<std::span<double>> g;
    grads.for_each_tensor([&](std::span<double> t) { g.push_back(t); });
    std::size_t i = 0;
    params.for_each_tensor([&](std::span<double> t) {
        fd_compare(t, g[i], f, label + ".t" + std::to_string(i), tol, stats);
        ++i;
    });
}

struct AttentionConfig {
    BevGrid grid;
    RefPoints refs;
    AttentionParams params;
    Vector query;
    Vector upstream;
};

inline double distance_to_integer(double x) { return std::abs(x - std::round(x)); }

/// True when some sampling location sits within `margin` cells of a
/// bilinear kink (integer cell coordinate).
inline bool near_kink(const AttentionConfig& cfg, double margin) {
    const auto plan = plan_attention(cfg.query, cfg.refs, cfg.grid.spec, cfg.params);
    for (const auto& p : plan.locations) {
        const double r = p.u * static_cast<double>(cfg.grid.H()) - 0.5;
        const double c = p.v * static_cast<double>(cfg.grid.W()) - 0.5;
        if (distance_to_integer(r) < margin || distance_to_integer(c) < margin) return true;
    }
    return false;
}

/// Random small configuration: 6 x 7 grid, N(0,1) features and query,
/// N(0, 0.5^2) weights, offset biases within +-3 cells.
template <typename Rng>
AttentionConfig random_attention_config(std::size_t M, std::size_t K, std::size_t C, Rng& rng, double margin) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (;;) {
        AttentionConfig cfg;
        cfg.grid = BevGrid(GridSpec{6, 7, BevRange{}}, C);
        for (double& v : cfg.grid.data) v = nd(rng);
        for (std::size_t m = 0; m < M; ++m) cfg.refs.points.push_back({unit(rng), unit(rng)});
        cfg.params = AttentionParams::zeros(M, K, C);
        cfg.params.for_each_tensor([&](std::span<double> t) {
            for (double& v : t) v = 0.5 * nd(rng);
        });
        for (double& v : cfg.params.offset_bias) v = 6.0 * unit(rng) - 3.0;
        cfg.query.resize(C);
        for (double& v : cfg.query) v = nd(rng);
        cfg.upstream.resize(C);
        for (double& v : cfg.upstream) v = nd(rng);
        if (!near_kink(cfg, margin)) return cfg;
    }
}

inline GradStats check_attention(AttentionConfig cfg, const GradTolerance& tol) {
    GradStats stats;
    auto f = [&] { return dot(cfg.upstream, lane_attn_forward(cfg.query, cfg.refs, cfg.grid, cfg.params)); };
    auto g = lane_attn_backward(cfg.query, cfg.refs, cfg.grid, cfg.params, cfg.upstream);
    fd_compare(cfg.query, g.query, f, "attn.query", tol, stats);
    fd_compare(cfg.grid.data, g.grid, f, "attn.grid", tol, stats);
    fd_compare_params(cfg.params, g.params, f, "attn.params", tol, stats);
    return stats;
}

inline bool mlp_near_hinge(const MlpParams& p, std::span<const double> x, double margin) {
    MlpCache cache;
    mlp_apply(p, x, &cache);
    for (const auto& pre : cache.preact)
        for (double v : pre)
            if (std::abs(v) < margin) return true;
    return false;
}

inline GradStats check_mlp(MlpParams p, Vector x, const Vector& upstream, const std::string& label,
                           const GradTolerance& tol) {
    GradStats stats;
    MlpCache cache;
    mlp_apply(p, x, &cache);
    MlpParams g = p.zeros_like();
    const Vector dx = mlp_backward(p, cache, upstream, g);
    auto f = [&] { return dot(upstream, mlp_apply(p, x)); };
    fd_compare(x, dx, f, label + ".input", tol, stats);
    fd_compare_params(p, g, f, label, tol, stats);
    return stats;
}

/// Every predictor head MLP, the mask embedding path and the topology pair
/// score, on one random draw. Draws with a ReLU input near zero are redrawn.
template <typename Rng>
GradStats check_predictor_heads(std::size_t C, Rng& rng, const GradTolerance& tol) {
    std::normal_distribution<double> nd(0.0, 1.0);
    auto randvec = [&](std::size_t n) {
        Vector v(n);
        for (double& x : v) x = nd(rng);
        return v;
    };
    auto randomize_norms = [&](MlpParams& p) {
        if (!p.layer_norm) return;
        for (auto& n : p.norms) {
            for (double& v : n.gamma) v = 1.0 + 0.3 * nd(rng);
            for (double& v : n.beta) v = 0.3 * nd(rng);
        }
    };

    GradStats stats;
    PredictorHeads heads;
    Vector q, q2;
    for (;;) {
        heads = PredictorHeads::random(C, rng, 0.5);
        for (auto* p : {&heads.centerline, &heads.offset, &heads.lane_class, &heads.left_type, &heads.right_type,
                        &heads.mask, &heads.pre, &heads.suc, &heads.top}) {
            for (auto& l : p->layers)
                for (double& v : l.bias) v = 0.3 * nd(rng);
            randomize_norms(*p);
        }
        q = randvec(C);
        q2 = randvec(C);
        bool bad = false;
        for (const auto* p : {&heads.centerline, &heads.offset, &heads.lane_class, &heads.left_type,
                              &heads.right_type, &heads.mask, &heads.pre, &heads.suc})
            bad = bad || mlp_near_hinge(*p, q, tol.kink_margin) || mlp_near_hinge(*p, q2, tol.kink_margin);
        if (!bad) {
            const Vector cat = concat(mlp_apply(heads.pre, q), mlp_apply(heads.suc, q2));
            bad = mlp_near_hinge(heads.top, cat, tol.kink_margin);
        }
        if (!bad) break;
    }

    const std::array<std::pair<const char*, const MlpParams*>, 8> named{{{"centerline", &heads.centerline},
                                                                          {"offset", &heads.offset},
                                                                          {"lane_class", &heads.lane_class},
                                                                          {"left_type", &heads.left_type},
                                                                          {"right_type", &heads.right_type},
                                                                          {"mask", &heads.mask},
                                                                          {"pre", &heads.pre},
                                                                          {"suc", &heads.suc}}};
    for (const auto& [name, p] : named) stats.merge(check_mlp(*p, q, randvec(p->out_dim()), name, tol));
    const Vector cat = concat(mlp_apply(heads.pre, q), mlp_apply(heads.suc, q2));
    stats.merge(check_mlp(heads.top, cat, randvec(1), "top", tol));

    // mask path: sum(U .* sigmoid(<mask_mlp(q), B>)) on a small grid
    {
        BevGrid grid(GridSpec{5, 4, BevRange{}}, C);
        for (double& v : grid.data) v = 0.3 * nd(rng);
        Matrix up(5, 4);
        for (double& v : up.data) v = nd(rng);
        MlpParams mp = heads.mask;
        MlpParams g = mp.zeros_like();
        Vector x = q;
        const Vector dx = mask_from_embedding_backward(x, mp, grid, up, g);
        auto f = [&] {
            const Matrix m = mask_from_embedding(x, mp, grid);
            return dot(up.data, m.data);
        };
        fd_compare(x, dx, f, "mask_embedding.query", tol, stats);
        fd_compare_params(mp, g, f, "mask_embedding", tol, stats);
    }

    // topology pair score
    {
        MlpParams pre = heads.pre, suc = heads.suc, top = heads.top;
        MlpParams gp = pre.zeros_like(), gs = suc.zeros_like(), gt = top.zeros_like();
        Vector qi = q, qj = q2;
        const double up = nd(rng);
        const auto g = topology_pair_backward(qi, qj, pre, suc, top, up, gp, gs, gt);
        auto f = [&] { return up * topology_pair_score(qi, qj, pre, suc, top); };
        fd_compare(qi, g.qi, f, "topology.qi", tol, stats);
        fd_compare(qj, g.qj, f, "topology.qj", tol, stats);
        fd_compare_params(pre, gp, f, "topology.pre", tol, stats);
        fd_compare_params(suc, gs, f, "topology.suc", tol, stats);
        fd_compare_params(top, gt, f, "topology.top", tol, stats);
    }
    return stats;
}

struct GradcheckReport {
    std::size_t trials = 0;
    GradStats attention;
    GradStats heads;
    std::vector<std::array<std::size_t, 3>> configs;  // (M, K, C) per trial

    bool ok() const { return attention.ok() && heads.ok(); }
};

inline constexpr std::array<std::size_t, 3> kGradcheckHeads{1, 2, 8};
inline constexpr std::array<std::size_t, 3> kGradcheckPoints{1, 4, 32};
inline constexpr std::array<std::size_t, 2> kGradcheckChannels{8, 16};

/// Trial t uses (M, K, C) cycling through every combination of the sets
/// above; each trial also checks all predictor heads at width C. Trials
/// run in parallel on independent seeded streams.
inline GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t trials, const GradTolerance& tol = {}) {
    GradcheckReport report;
    report.trials = trials;
    report.configs.resize(trials);
    std::vector<GradStats> attn(trials), heads(trials);
    parallel_for(trials, [&](std::size_t t) {
        const std::size_t M = kGradcheckHeads[t % 3];
        const std::size_t K = kGradcheckPoints[(t / 3) % 3];
        const std::size_t C = kGradcheckChannels[(t / 9) % 2];
        report.configs[t] = {M, K, C};
        std::mt19937_64 rng(detail::stream_key(seed, "gradcheck", static_cast<std::int64_t>(t)));
        attn[t] = check_attention(random_attention_config(M, K, C, rng, tol.kink_margin), tol);
        heads[t] = check_predictor_heads(C, rng, tol);
    });
    for (std::size_t t = 0; t < trials; ++t) {
        report.attention.merge(attn[t]);
        report.heads.merge(heads[t]);
    }
    return report;
}

}  // namespace laneseg
