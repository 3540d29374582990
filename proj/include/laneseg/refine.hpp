#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lane_attention.hpp"
#include "losses.hpp"
#include "predictor.hpp"

namespace laneseg {

/// Residual two-layer ReLU feed-forward: q + out(relu(in(q))).
struct FeedForward {
    Linear in;   // hidden x C
    Linear out;  // C x hidden

    template <typename Rng>
    static FeedForward random(std::size_t channels, std::size_t hidden, Rng& rng, double scale) {
        std::normal_distribution<double> nd(0.0, scale);
        FeedForward f;
        f.in.weight = Matrix(hidden, channels);
        f.in.bias.assign(hidden, 0.0);
        f.out.weight = Matrix(channels, hidden);
        f.out.bias.assign(channels, 0.0);
        for (double& v : f.in.weight.data) v = nd(rng);
        for (double& v : f.out.weight.data) v = nd(rng);
        return f;
    }

    FeedForward zeros_like() const {
        FeedForward g;
        g.in.weight = Matrix(in.weight.rows, in.weight.cols);
        g.in.bias.assign(in.bias.size(), 0.0);
        g.out.weight = Matrix(out.weight.rows, out.weight.cols);
        g.out.bias.assign(out.bias.size(), 0.0);
        return g;
    }

    template <typename Fn>
    void for_each_tensor(Fn&& fn) {
        fn(std::span<double>(in.weight.data));
        fn(std::span<double>(in.bias));
        fn(std::span<double>(out.weight.data));
        fn(std::span<double>(out.bias));
    }
};

inline Vector ffn_apply(const FeedForward& f, std::span<const double> q, Vector* hidden = nullptr) {
    Vector h = matvec(f.in.weight, q);
    axpy(1.0, f.in.bias, h);
    for (double& v : h) v = std::max(v, 0.0);
    Vector y(q.begin(), q.end());
    axpy(1.0, matvec(f.out.weight, h), y);
    axpy(1.0, f.out.bias, y);
    if (hidden) *hidden = std::move(h);
    return y;
}

/// Returns d q for upstream dy; accumulates parameter gradients.
inline Vector ffn_backward(const FeedForward& f, std::span<const double> q, std::span<const double> hidden,
                           std::span<const double> dy, FeedForward& grads) {
    add_outer(grads.out.weight, dy, hidden);
    axpy(1.0, dy, grads.out.bias);
    Vector dh(hidden.size(), 0.0);
    add_matTvec(f.out.weight, dy, dh);
    for (std::size_t i = 0; i < dh.size(); ++i)
        if (hidden[i] <= 0.0) dh[i] = 0.0;
    add_outer(grads.in.weight, dh, q);
    axpy(1.0, dh, grads.in.bias);
    Vector dq(dy.begin(), dy.end());
    add_matTvec(f.in.weight, dh, dq);
    return dq;
}

struct DecoderLayer {
    AttentionParams attention;
    FeedForward ffn;
};

/// Per-layer record of an iterative refinement pass.
struct LayerState {
    RefPoints refs;
    Vector query;  // after the layer
    LaneSegment segment;
};

struct RefinementResult {
    LaneSegment prediction;
    std::vector<LayerState> layers;
};

using SegmentPredictor = std::function<LaneSegment(std::span<const double>)>;

/// Decoder pass: layer 1 attends from `first_refs`; every later layer places
/// its reference points along the previous layer's predicted segment. Each
/// layer applies q += lane_attn(q), then the residual feed-forward, then the
/// predictor.
inline RefinementResult refine_iterate(std::span<const double> query, const BevGrid& grid,
                                       const std::vector<DecoderLayer>& layers, const SegmentPredictor& predictor,
                                       const RefPoints& first_refs) {
    require(!layers.empty(), "refine_iterate: need at least one layer");
    RefinementResult result;
    Vector q(query.begin(), query.end());
    RefPoints refs = first_refs;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (l > 0) refs = distribute_reference_points(result.layers.back().segment, layers[l].attention.M, grid.spec);
        Vector u = q;
        axpy(1.0, lane_attn_forward(q, refs, grid, layers[l].attention), u);
        q = ffn_apply(layers[l].ffn, u);
        LayerState st;
        st.refs = refs;
        st.query = q;
        st.segment = predictor(q);
        result.layers.push_back(std::move(st));
    }
    result.prediction = result.layers.back().segment;
    return result;
}

/// Default predictor: regression and classification heads.
inline SegmentPredictor head_predictor(const PredictorHeads& heads) {
    return [&heads](std::span<const double> q) { return to_prediction(predict_heads(q, heads)).segment; };
}

/// Gradient of lambda * l1_vec w.r.t. the flat centerline and offset head
/// outputs (left = c + o, right = c - o). Sign(0) is taken as 0.
inline void l1_vec_output_grads(const Polyline3& center, const Polyline3& offset, const LaneSegment& target,
                                double lambda, Vector& d_center, Vector& d_offset) {
    const std::size_t n = center.size();
    const double scale = lambda / static_cast<double>(9 * n);
    auto sgn = [](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); };
    d_center.assign(3 * n, 0.0);
    d_offset.assign(3 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::array<double, 3> c{center[i].x, center[i].y, center[i].z};
        const std::array<double, 3> o{offset[i].x, offset[i].y, offset[i].z};
        const auto& tc = target.centerline[i];
        const auto& tl = target.left_boundary[i];
        const auto& tr = target.right_boundary[i];
        const std::array<double, 3> vc{tc.x, tc.y, tc.z}, vl{tl.x, tl.y, tl.z}, vr{tr.x, tr.y, tr.z};
        for (std::size_t k = 0; k < 3; ++k) {
            const double sc = sgn(c[k] - vc[k]);
            const double sl = sgn(c[k] + o[k] - vl[k]);
            const double sr = sgn(c[k] - o[k] - vr[k]);
            d_center[3 * i + k] = scale * (sc + sl + sr);
            d_offset[3 * i + k] = scale * (sl - sr);
        }
    }
}

/// Everything the fit demo trains: decoder layers plus the two regression
/// heads. Classification heads stay fixed.
struct RefinementModel {
    std::vector<DecoderLayer> layers;
    PredictorHeads heads;
    RefProjection ref_proj;
    Vector positional_query;

    template <typename Fn>
    void for_each_trainable(Fn&& fn) {
        for (auto& l : layers) {
            l.attention.for_each_tensor(fn);
            l.ffn.for_each_tensor(fn);
        }
        heads.centerline.for_each_tensor(fn);
        heads.offset.for_each_tensor(fn);
    }
};

struct FitOptions {
    std::size_t steps = 2000;
    std::size_t layers = 3;
    std::size_t channels = 16;
    std::size_t heads = 8;
    std::size_t points = 32;
    double init_scale = 1e-2;
    double learning_rate = 1e-2;
    bool adam = true;  // false: plain gradient descent
    std::uint64_t seed = 0;
};

/// Seeded model: N(0, init_scale^2) weights, canonical sampling-offset prior.
inline RefinementModel make_refinement_model(const FitOptions& opt) {
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> nd(0.0, opt.init_scale);
    RefinementModel model;
    for (std::size_t l = 0; l < opt.layers; ++l) {
        DecoderLayer layer;
        layer.attention = AttentionParams::zeros(opt.heads, opt.points, opt.channels);
        for (auto& m : layer.attention.value_proj)
            for (double& v : m.data) v = nd(rng);
        for (auto& m : layer.attention.output_proj)
            for (double& v : m.data) v = nd(rng);
        for (double& v : layer.attention.attn_weight.data) v = nd(rng);
        layer.attention = init_sampling_offsets(std::move(layer.attention));
        layer.ffn = FeedForward::random(opt.channels, 2 * opt.channels, rng, opt.init_scale);
        model.layers.push_back(std::move(layer));
    }
    model.heads = PredictorHeads::random(opt.channels, rng, opt.init_scale);
    model.ref_proj.weight = Matrix(2, opt.channels);
    for (double& v : model.ref_proj.weight.data) v = nd(rng);
    model.ref_proj.bias.assign(2, 0.0);
    std::normal_distribution<double> unit(0.0, 1.0);
    model.positional_query.resize(opt.channels);
    for (double& v : model.positional_query) v = unit(rng);
    return model;
}

struct RefinementModelGrads {
    std::vector<AttentionParams> attention;
    std::vector<FeedForward> ffn;
    MlpParams centerline;
    MlpParams offset;

    template <typename Fn>
    void for_each_trainable(Fn&& fn) {
        for (std::size_t l = 0; l < attention.size(); ++l) {
            attention[l].for_each_tensor(fn);
            ffn[l].for_each_tensor(fn);
        }
        centerline.for_each_tensor(fn);
        offset.for_each_tensor(fn);
    }
};

/// lambda_vec * l1_vec of the final-layer prediction.
inline double fit_loss(const RefinementModel& model, std::span<const double> query, const BevGrid& grid,
                       const LaneSegment& target, double lambda) {
    const auto first = identical_init(model.positional_query, model.ref_proj, model.layers.front().attention.M);
    const auto res = refine_iterate(query, grid, model.layers, head_predictor(model.heads), first);
    return lambda * l1_vec(res.prediction, target);
}

/// Loss and gradients for the fit objective. Gradients flow through every
/// layer's attention and feed-forward via the query; reference points are
/// held fixed.
inline double fit_loss_and_grads(const RefinementModel& model, std::span<const double> query, const BevGrid& grid,
                                 const LaneSegment& target, double lambda, RefinementModelGrads& grads) {
    const std::size_t L = model.layers.size();
    const auto predictor = head_predictor(model.heads);
    RefPoints refs = identical_init(model.positional_query, model.ref_proj, model.layers.front().attention.M);

    std::vector<Vector> q_in(L), u(L), hidden(L);
    std::vector<RefPoints> layer_refs(L);
    Vector q(query.begin(), query.end());
    LaneSegment prev;
    for (std::size_t l = 0; l < L; ++l) {
        if (l > 0) refs = distribute_reference_points(prev, model.layers[l].attention.M, grid.spec);
        layer_refs[l] = refs;
        q_in[l] = q;
        u[l] = q;
        axpy(1.0, lane_attn_forward(q, refs, grid, model.layers[l].attention), u[l]);
        q = ffn_apply(model.layers[l].ffn, u[l], &hidden[l]);
        if (l + 1 < L) prev = predictor(q);
    }

    MlpCache c_center, c_offset;
    const Polyline3 center = to_points(mlp_apply(model.heads.centerline, q, &c_center));
    const Polyline3 offset = to_points(mlp_apply(model.heads.offset, q, &c_offset));
    LaneSegment pred;
    pred.centerline = center;
    auto b = from_center_and_offset(center, offset);
    pred.left_boundary = std::move(b.left);
    pred.right_boundary = std::move(b.right);
    const double loss = lambda * l1_vec(pred, target);

    grads.attention.clear();
    grads.ffn.clear();
    for (const auto& layer : model.layers) {
        grads.attention.push_back(AttentionParams::zeros(layer.attention.M, layer.attention.K, layer.attention.C));
        grads.ffn.push_back(layer.ffn.zeros_like());
    }
    grads.centerline = model.heads.centerline.zeros_like();
    grads.offset = model.heads.offset.zeros_like();

    Vector d_center, d_offset;
    l1_vec_output_grads(center, offset, target, lambda, d_center, d_offset);
    Vector dq = mlp_backward(model.heads.centerline, c_center, d_center, grads.centerline);
    axpy(1.0, mlp_backward(model.heads.offset, c_offset, d_offset, grads.offset), dq);

    for (std::size_t l = L; l-- > 0;) {
        const Vector du = ffn_backward(model.layers[l].ffn, u[l], hidden[l], dq, grads.ffn[l]);
        auto ag = lane_attn_backward(q_in[l], layer_refs[l], grid, model.layers[l].attention, du);
        grads.attention[l] = std::move(ag.params);
        dq = du;
        axpy(1.0, ag.query, dq);
    }
    return loss;
}

struct FitReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double best_loss = 0.0;
    std::size_t steps = 0;
    std::vector<double> history;  // loss before each step, then the final loss

    double ratio() const { return initial_loss > 0.0 ? final_loss / initial_loss : 0.0; }
};

}  // namespace laneseg
