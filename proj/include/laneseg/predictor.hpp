#pragma once

#include <array>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "core.hpp"
#include "lane_attention.hpp"
#include "linalg.hpp"
#include "losses.hpp"
#include "matching.hpp"

namespace laneseg {

struct Linear {
    Matrix weight;  // out x in
    Vector bias;
};

struct LayerNorm {
    Vector gamma;
    Vector beta;
};

inline constexpr double kLayerNormEps = 1e-5;

/// Three linear layers with ReLU between them; classification heads also
/// normalize the two hidden layers (Linear -> LayerNorm -> ReLU).
struct MlpParams {
    std::array<Linear, 3> layers;
    bool layer_norm = false;
    std::array<LayerNorm, 2> norms;

    std::size_t in_dim() const { return layers[0].weight.cols; }
    std::size_t out_dim() const { return layers[2].weight.rows; }

    static MlpParams zeros(std::size_t in, std::size_t hidden, std::size_t out, bool with_norm = false) {
        MlpParams p;
        const std::array<std::size_t, 4> dims{in, hidden, hidden, out};
        for (std::size_t l = 0; l < 3; ++l) {
            p.layers[l].weight = Matrix(dims[l + 1], dims[l]);
            p.layers[l].bias.assign(dims[l + 1], 0.0);
        }
        p.layer_norm = with_norm;
        if (with_norm)
            for (auto& n : p.norms) {
                n.gamma.assign(hidden, 1.0);
                n.beta.assign(hidden, 0.0);
            }
        return p;
    }

    /// Weights ~ N(0, scale^2); biases zero; norm gains one.
    template <typename Rng>
    static MlpParams random(std::size_t in, std::size_t hidden, std::size_t out, bool with_norm, Rng& rng,
                            double scale) {
        MlpParams p = zeros(in, hidden, out, with_norm);
        std::normal_distribution<double> nd(0.0, scale);
        for (auto& l : p.layers)
            for (double& v : l.weight.data) v = nd(rng);
        return p;
    }

    template <typename Fn>
    void for_each_tensor(Fn&& fn) {
        for (auto& l : layers) {
            fn(std::span<double>(l.weight.data));
            fn(std::span<double>(l.bias));
        }
        if (layer_norm)
            for (auto& n : norms) {
                fn(std::span<double>(n.gamma));
                fn(std::span<double>(n.beta));
            }
    }

    /// Same shapes, all zero (gradient accumulator).
    MlpParams zeros_like() const {
        MlpParams g = zeros(in_dim(), layers[0].weight.rows, out_dim(), layer_norm);
        if (layer_norm)
            for (auto& n : g.norms) std::fill(n.gamma.begin(), n.gamma.end(), 0.0);
        return g;
    }
};

struct MlpCache {
    Vector input;
    std::array<Vector, 2> xhat;      // normalized pre-activations (LayerNorm only)
    std::array<double, 2> inv_std{};
    std::array<Vector, 2> preact;    // value fed to the ReLU
    std::array<Vector, 2> hidden;    // ReLU output
};

inline Vector mlp_apply(const MlpParams& p, std::span<const double> x, MlpCache* cache = nullptr) {
    require(x.size() == p.in_dim(), "mlp_apply: input dimension mismatch");
    if (cache) cache->input.assign(x.begin(), x.end());
    Vector cur(x.begin(), x.end());
    for (std::size_t l = 0; l < 2; ++l) {
        Vector h = matvec(p.layers[l].weight, cur);
        axpy(1.0, p.layers[l].bias, h);
        if (p.layer_norm) {
            const double n = static_cast<double>(h.size());
            double mean = 0.0;
            for (double v : h) mean += v;
            mean /= n;
            double var = 0.0;
            for (double v : h) var += (v - mean) * (v - mean);
            var /= n;
            const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
            Vector xhat(h.size());
            for (std::size_t i = 0; i < h.size(); ++i) {
                xhat[i] = (h[i] - mean) * inv;
                h[i] = p.norms[l].gamma[i] * xhat[i] + p.norms[l].beta[i];
            }
            if (cache) {
                cache->xhat[l] = std::move(xhat);
                cache->inv_std[l] = inv;
            }
        }
        if (cache) cache->preact[l] = h;
        for (double& v : h) v = std::max(v, 0.0);
        if (cache) cache->hidden[l] = h;
        cur = std::move(h);
    }
    Vector y = matvec(p.layers[2].weight, cur);
    axpy(1.0, p.layers[2].bias, y);
    return y;
}

/// Accumulates parameter gradients into `grads` and returns d input.
inline Vector mlp_backward(const MlpParams& p, const MlpCache& cache, std::span<const double> dy, MlpParams& grads) {
    require(dy.size() == p.out_dim(), "mlp_backward: upstream dimension mismatch");
    add_outer(grads.layers[2].weight, dy, cache.hidden[1]);
    axpy(1.0, dy, grads.layers[2].bias);
    Vector d(p.layers[2].weight.cols, 0.0);
    add_matTvec(p.layers[2].weight, dy, d);

    for (std::size_t l = 2; l-- > 0;) {
        for (std::size_t i = 0; i < d.size(); ++i)
            if (cache.preact[l][i] <= 0.0) d[i] = 0.0;
        if (p.layer_norm) {
            const auto& xhat = cache.xhat[l];
            const double n = static_cast<double>(d.size());
            Vector dxhat(d.size());
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (std::size_t i = 0; i < d.size(); ++i) {
                grads.norms[l].gamma[i] += d[i] * xhat[i];
                grads.norms[l].beta[i] += d[i];
                dxhat[i] = d[i] * p.norms[l].gamma[i];
                sum_dxhat += dxhat[i];
                sum_dxhat_xhat += dxhat[i] * xhat[i];
            }
            for (std::size_t i = 0; i < d.size(); ++i)
                d[i] = cache.inv_std[l] / n * (n * dxhat[i] - sum_dxhat - xhat[i] * sum_dxhat_xhat);
        }
        const Vector& in = l == 0 ? cache.input : cache.hidden[0];
        add_outer(grads.layers[l].weight, d, in);
        axpy(1.0, d, grads.layers[l].bias);
        Vector dn(p.layers[l].weight.cols, 0.0);
        add_matTvec(p.layers[l].weight, d, dn);
        d = std::move(dn);
    }
    return d;
}

/// Prediction heads for one query. Regression heads emit kNumPoints x 3
/// values; hidden width defaults to the query width.
struct PredictorHeads {
    MlpParams centerline;
    MlpParams offset;
    MlpParams lane_class;
    MlpParams left_type;
    MlpParams right_type;
    MlpParams mask;
    MlpParams pre;
    MlpParams suc;
    MlpParams top;

    template <typename Rng>
    static PredictorHeads random(std::size_t channels, Rng& rng, double scale) {
        const std::size_t c = channels;
        PredictorHeads h;
        h.centerline = MlpParams::random(c, c, kNumPoints * 3, false, rng, scale);
        h.offset = MlpParams::random(c, c, kNumPoints * 3, false, rng, scale);
        h.lane_class = MlpParams::random(c, c, 2, true, rng, scale);
        h.left_type = MlpParams::random(c, c, 3, true, rng, scale);
        h.right_type = MlpParams::random(c, c, 3, true, rng, scale);
        h.mask = MlpParams::random(c, c, c, false, rng, scale);
        h.pre = MlpParams::random(c, c, c, false, rng, scale);
        h.suc = MlpParams::random(c, c, c, false, rng, scale);
        h.top = MlpParams::random(2 * c, c, 1, false, rng, scale);
        return h;
    }

    static PredictorHeads zeros(std::size_t channels) {
        const std::size_t c = channels;
        PredictorHeads h;
        h.centerline = MlpParams::zeros(c, c, kNumPoints * 3);
        h.offset = MlpParams::zeros(c, c, kNumPoints * 3);
        h.lane_class = MlpParams::zeros(c, c, 2, true);
        h.left_type = MlpParams::zeros(c, c, 3, true);
        h.right_type = MlpParams::zeros(c, c, 3, true);
        h.mask = MlpParams::zeros(c, c, c);
        h.pre = MlpParams::zeros(c, c, c);
        h.suc = MlpParams::zeros(c, c, c);
        h.top = MlpParams::zeros(2 * c, c, 1);
        return h;
    }
};

struct HeadOutputs {
    Polyline3 centerline;
    Polyline3 offset;
    std::array<double, 2> class_prob{};
    TypeProbs left_type_prob{};
    TypeProbs right_type_prob{};
};

inline Polyline3 to_points(std::span<const double> flat) {
    Polyline3 pts(flat.size() / 3);
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]};
    return pts;
}

inline HeadOutputs predict_heads(std::span<const double> query, const PredictorHeads& heads) {
    HeadOutputs out;
    out.centerline = to_points(mlp_apply(heads.centerline, query));
    out.offset = to_points(mlp_apply(heads.offset, query));
    const Vector cls = mlp_apply(heads.lane_class, query);
    out.class_prob = {sigmoid(cls[0]), sigmoid(cls[1])};
    const Vector lt = softmax(mlp_apply(heads.left_type, query));
    const Vector rt = softmax(mlp_apply(heads.right_type, query));
    out.left_type_prob = {lt[0], lt[1], lt[2]};
    out.right_type_prob = {rt[0], rt[1], rt[2]};
    return out;
}

/// Lane segment from head outputs: boundaries are centerline +/- offset,
/// class and types by arg-max, confidence is the top class probability.
inline SegmentPrediction to_prediction(const HeadOutputs& h, int id = 0) {
    auto argmax3 = [](const TypeProbs& p) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < 3; ++i)
            if (p[i] > p[best]) best = i;
        return static_cast<LineType>(best);
    };
    SegmentPrediction pred;
    auto& s = pred.segment;
    s.id = id;
    s.centerline = h.centerline;
    auto b = from_center_and_offset(h.centerline, h.offset);
    s.left_boundary = std::move(b.left);
    s.right_boundary = std::move(b.right);
    const bool crossing = h.class_prob[1] > h.class_prob[0];
    s.lane_class = crossing ? LaneClass::PedCrossing : LaneClass::LaneSegment;
    s.confidence = std::max(h.class_prob[0], h.class_prob[1]);
    s.left_type = argmax3(h.left_type_prob);
    s.right_type = argmax3(h.right_type_prob);
    pred.class_prob = h.class_prob;
    pred.left_type_prob = h.left_type_prob;
    pred.right_type_prob = h.right_type_prob;
    return pred;
}

/// Per-cell mask probability sigmoid(<E_mask, B[h, w, :]>) with
/// E_mask = mask_mlp(query).
inline Matrix mask_from_embedding(std::span<const double> query, const MlpParams& mask_mlp, const BevGrid& grid) {
    require(mask_mlp.out_dim() == grid.C, "mask_from_embedding: embedding size differs from grid channels");
    const Vector e = mlp_apply(mask_mlp, query);
    Matrix out(grid.H(), grid.W());
    for (std::size_t h = 0; h < grid.H(); ++h)
        for (std::size_t w = 0; w < grid.W(); ++w)
            out(h, w) = sigmoid(dot(e, std::span<const double>(grid.data.data() + (h * grid.W() + w) * grid.C, grid.C)));
    return out;
}

/// Gradient of sum(upstream .* mask_from_embedding(...)) with respect to the
/// query; parameter gradients accumulate into `grads`.
inline Vector mask_from_embedding_backward(std::span<const double> query, const MlpParams& mask_mlp,
                                           const BevGrid& grid, const Matrix& upstream, MlpParams& grads) {
    require(upstream.rows == grid.H() && upstream.cols == grid.W(), "mask_from_embedding: upstream shape");
    MlpCache cache;
    const Vector e = mlp_apply(mask_mlp, query, &cache);
    Vector de(grid.C, 0.0);
    for (std::size_t h = 0; h < grid.H(); ++h) {
        for (std::size_t w = 0; w < grid.W(); ++w) {
            std::span<const double> cell(grid.data.data() + (h * grid.W() + w) * grid.C, grid.C);
            const double s = sigmoid(dot(e, cell));
            axpy(upstream(h, w) * s * (1.0 - s), cell, de);
        }
    }
    return mlp_backward(mask_mlp, cache, de, grads);
}

inline Vector concat(std::span<const double> a, std::span<const double> b) {
    Vector out(a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

/// Successor score of j following i: sigmoid(top(concat(pre(q_i), suc(q_j)))).
inline double topology_pair_score(std::span<const double> qi, std::span<const double> qj, const MlpParams& pre,
                                  const MlpParams& suc, const MlpParams& top) {
    return sigmoid(mlp_apply(top, concat(mlp_apply(pre, qi), mlp_apply(suc, qj)))[0]);
}

/// Weighted adjacency over a set of queries; the diagonal is zero.
inline Matrix topology_scores(const std::vector<Vector>& queries, const MlpParams& pre, const MlpParams& suc,
                              const MlpParams& top) {
    require(!queries.empty(), "topology_scores: need at least one query");
    require(top.in_dim() == pre.out_dim() + suc.out_dim(), "topology_scores: top MLP input width");
    std::vector<Vector> ep, es;
    for (const auto& q : queries) {
        ep.push_back(mlp_apply(pre, q));
        es.push_back(mlp_apply(suc, q));
    }
    const std::size_t n = queries.size();
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) a(i, j) = sigmoid(mlp_apply(top, concat(ep[i], es[j]))[0]);
    return a;
}

struct TopologyPairGrads {
    Vector qi;
    Vector qj;
};

/// Gradient of upstream * topology_pair_score; parameter gradients
/// accumulate into the three accumulators.
inline TopologyPairGrads topology_pair_backward(std::span<const double> qi, std::span<const double> qj,
                                                const MlpParams& pre, const MlpParams& suc, const MlpParams& top,
                                                double upstream, MlpParams& g_pre, MlpParams& g_suc,
                                                MlpParams& g_top) {
    MlpCache c_pre, c_suc, c_top;
    const Vector a = mlp_apply(pre, qi, &c_pre);
    const Vector b = mlp_apply(suc, qj, &c_suc);
    const double s = sigmoid(mlp_apply(top, concat(a, b), &c_top)[0]);
    const Vector d_logit{upstream * s * (1.0 - s)};
    const Vector d_cat = mlp_backward(top, c_top, d_logit, g_top);
    TopologyPairGrads g;
    g.qi = mlp_backward(pre, c_pre, std::span<const double>(d_cat).first(a.size()), g_pre);
    g.qj = mlp_backward(suc, c_suc, std::span<const double>(d_cat).subspan(a.size()), g_suc);
    return g;
}

}  // namespace laneseg
