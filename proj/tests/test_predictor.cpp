#include <gtest/gtest.h>

#include <random>

#include "laneseg/fitdemo.hpp"
#include "laneseg/gradcheck.hpp"
#include "laneseg/predictor.hpp"
#include "test_util.hpp"

using namespace laneseg;

namespace {

Vector randvec(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Vector v(n);
    for (double& x : v) x = nd(rng);
    return v;
}

}  // namespace

TEST(Mlp, IdentityLayersComposeRelu) {
    auto p = MlpParams::zeros(4, 4, 4);
    for (auto& l : p.layers)
        for (std::size_t i = 0; i < 4; ++i) l.weight(i, i) = 1.0;
    const Vector x{1.5, -2.0, 0.0, 3.0};
    EXPECT_EQ(mlp_apply(p, x), (Vector{1.5, 0.0, 0.0, 3.0}));
}

TEST(Mlp, ZeroInputZeroBias) {
    std::mt19937_64 rng(1);
    const auto p = MlpParams::random(5, 7, 3, false, rng, 1.0);
    EXPECT_EQ(mlp_apply(p, Vector(5, 0.0)), Vector(3, 0.0));
}

TEST(Mlp, DimensionMismatchThrows) {
    const auto p = MlpParams::zeros(4, 4, 2);
    EXPECT_THROW(mlp_apply(p, Vector(3, 0.0)), std::invalid_argument);
}

TEST(Mlp, FiniteDifferences) {
    std::mt19937_64 rng(2);
    for (bool norm : {false, true}) {
        auto p = MlpParams::random(6, 5, 4, norm, rng, 0.7);
        for (auto& l : p.layers)
            for (double& b : l.bias) b = 0.1 * randvec(1, rng)[0];
        const auto stats = check_mlp(p, randvec(6, rng), randvec(4, rng), norm ? "norm" : "plain", GradTolerance{});
        EXPECT_GT(stats.checked, 0u);
        EXPECT_EQ(stats.failed, 0u);
    }
}

TEST(PredictHeads, ShapesAndZeroWeights) {
    const auto heads = PredictorHeads::zeros(8);
    std::mt19937_64 rng(3);
    const auto out = predict_heads(randvec(8, rng), heads);
    EXPECT_EQ(out.centerline.size(), kNumPoints);
    EXPECT_EQ(out.offset.size(), kNumPoints);
    for (const auto& p : out.centerline) EXPECT_EQ(p, (Point3{0, 0, 0}));
    EXPECT_EQ(out.class_prob[0], 0.5);
    EXPECT_EQ(out.class_prob[1], 0.5);
    for (double v : out.left_type_prob) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
    for (double v : out.right_type_prob) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(PredictHeads, BoundariesSatisfyMidpointIdentity) {
    std::mt19937_64 rng(4);
    const auto heads = PredictorHeads::random(8, rng, 0.8);
    for (int t = 0; t < 20; ++t) {
        const auto out = predict_heads(randvec(8, rng), heads);
        double s = 0.0;
        for (double v : out.left_type_prob) s += v;
        EXPECT_NEAR(s, 1.0, 1e-12);
        const auto seg = to_prediction(out, 7).segment;
        EXPECT_EQ(seg.id, 7);
        for (std::size_t i = 0; i < kNumPoints; ++i) {
            EXPECT_NEAR(0.5 * (seg.left_boundary[i].x + seg.right_boundary[i].x), seg.centerline[i].x, 1e-12);
            EXPECT_NEAR(0.5 * (seg.left_boundary[i].y + seg.right_boundary[i].y), seg.centerline[i].y, 1e-12);
            EXPECT_NEAR(0.5 * (seg.left_boundary[i].z + seg.right_boundary[i].z), seg.centerline[i].z, 1e-12);
        }
    }
}

TEST(PredictHeads, FiniteDifferencesAllHeads) {
    std::mt19937_64 rng(5);
    for (std::size_t C : {std::size_t{8}, std::size_t{16}}) {
        const auto stats = check_predictor_heads(C, rng, GradTolerance{});
        EXPECT_GT(stats.checked, 0u);
        EXPECT_EQ(stats.failed, 0u);
        for (const auto& f : stats.failures) ADD_FAILURE() << f;
    }
}

TEST(Mask, ZeroEmbeddingAndShape) {
    std::mt19937_64 rng(6);
    BevGrid g(GridSpec{5, 3, BevRange{}}, 4);
    for (double& v : g.data) v = randvec(1, rng)[0];
    const auto m = mask_from_embedding(randvec(4, rng), MlpParams::zeros(4, 4, 4), g);
    EXPECT_EQ(m.rows, 5u);
    EXPECT_EQ(m.cols, 3u);
    for (double v : m.data) EXPECT_EQ(v, 0.5);
    EXPECT_THROW(mask_from_embedding(Vector(4, 0.0), MlpParams::zeros(4, 4, 3), g), std::invalid_argument);
}

TEST(Mask, OneHotEmbeddingIsMonotoneInChannel) {
    // bias-only MLP emitting e = 2 * one_hot(1)
    auto p = MlpParams::zeros(3, 3, 3);
    p.layers[2].bias = {0.0, 2.0, 0.0};
    BevGrid g(GridSpec{4, 4, BevRange{}}, 3);
    std::mt19937_64 rng(7);
    for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t w = 0; w < 4; ++w) {
            g.at(h, w, 0) = randvec(1, rng)[0];
            g.at(h, w, 1) = static_cast<double>(h * 4 + w) - 7.5;
            g.at(h, w, 2) = randvec(1, rng)[0];
        }
    const auto m = mask_from_embedding(Vector(3, 0.0), p, g);
    for (std::size_t i = 1; i < m.data.size(); ++i) EXPECT_GT(m.data[i], m.data[i - 1]);
    for (double v : m.data) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
}

TEST(Topology, RangeDiagonalAndSymmetry) {
    std::mt19937_64 rng(8);
    const auto pre = MlpParams::random(6, 6, 6, false, rng, 0.8);
    const auto top = MlpParams::random(12, 6, 1, false, rng, 0.8);
    std::vector<Vector> qs;
    for (int i = 0; i < 5; ++i) qs.push_back(randvec(6, rng));
    const auto suc = MlpParams::random(6, 6, 6, false, rng, 0.8);
    const auto a = topology_scores(qs, pre, suc, top);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            if (i == j) {
                EXPECT_EQ(a(i, j), 0.0);
            } else {
                EXPECT_GT(a(i, j), 0.0);
                EXPECT_LT(a(i, j), 1.0);
            }
        }
    const std::vector<Vector> twins{qs[0], qs[0]};
    const auto s = topology_scores(twins, pre, pre, top);
    EXPECT_EQ(s(0, 1), s(1, 0));
    EXPECT_THROW(topology_scores({}, pre, suc, top), std::invalid_argument);
}

TEST(Topology, PermutationEquivariance) {
    std::mt19937_64 rng(9);
    const auto pre = MlpParams::random(4, 5, 4, false, rng, 0.9);
    const auto suc = MlpParams::random(4, 5, 4, false, rng, 0.9);
    const auto top = MlpParams::random(8, 5, 1, false, rng, 0.9);
    std::vector<Vector> qs;
    for (int i = 0; i < 6; ++i) qs.push_back(randvec(4, rng));
    std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    std::vector<Vector> permuted;
    for (std::size_t k : perm) permuted.push_back(qs[k]);
    const auto a = topology_scores(qs, pre, suc, top);
    const auto b = topology_scores(permuted, pre, suc, top);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(b(i, j), a(perm[i], perm[j]));
}

TEST(FitDemo, AdamReachesTenPercent) {
    FitOptions opt;
    const auto r = run_fit_demo(opt);
    EXPECT_EQ(r.steps, 2000u);
    EXPECT_EQ(r.history.size(), 2001u);
    EXPECT_GT(r.initial_loss, 0.0);
    EXPECT_LT(r.ratio(), 0.1);
}

TEST(FitDemo, IsDeterministic) {
    FitOptions opt;
    opt.steps = 30;
    const auto a = run_fit_demo(opt), b = run_fit_demo(opt);
    EXPECT_EQ(a.history, b.history);
}

TEST(FitDemo, PlainGradientDescentDecreasesLoss) {
    FitOptions opt;
    opt.adam = false;
    opt.steps = 50;
    const auto r = run_fit_demo(opt);
    EXPECT_LT(r.final_loss, r.initial_loss);
}

TEST(FitDemo, LossGradientMatchesFiniteDifferences) {
    FitOptions opt;
    opt.channels = 8;
    opt.heads = 2;
    opt.points = 4;
    opt.layers = 1;  // later layers move their reference points, which the analytic pass holds fixed
    opt.init_scale = 0.3;
    const double lambda = LossWeights{}.vec;
    const auto problem = make_fit_problem(opt);
    auto model = make_refinement_model(opt);
    RefinementModelGrads grads;
    fit_loss_and_grads(model, problem.query, problem.grid, problem.target, lambda, grads);
    std::vector<double> analytic;
    grads.for_each_trainable([&](std::span<double> t) { analytic.insert(analytic.end(), t.begin(), t.end()); });
    std::size_t idx = 0, checked = 0;
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<int> pick(0, 19);
    model.for_each_trainable([&](std::span<double> t) {
        for (double& v : t) {
            const double a = analytic[idx++];
            if (pick(rng) != 0) continue;  // sample ~5% of the parameters
            const double keep = v;
            v = keep + 1e-6;
            const double up = fit_loss(model, problem.query, problem.grid, problem.target, lambda);
            v = keep - 1e-6;
            const double down = fit_loss(model, problem.query, problem.grid, problem.target, lambda);
            v = keep;
            const double fd = (up - down) / 2e-6;
            EXPECT_NEAR(a, fd, 1e-6 + 1e-4 * std::abs(fd));
            ++checked;
        }
    });
    EXPECT_GT(checked, 50u);
}
