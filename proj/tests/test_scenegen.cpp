#include <gtest/gtest.h>

#include <algorithm>

#include "laneseg/metrics.hpp"
#include "laneseg/scenegen.hpp"

using namespace laneseg;

namespace {

double row_sum(const Matrix& a, std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) s += a(i, j);
    return s;
}

double col_sum(const Matrix& a, std::size_t j) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) s += a(i, j);
    return s;
}

}  // namespace

TEST(Generate, Deterministic) {
    for (const auto& preset : kPresets) {
        EXPECT_EQ(generate(preset, 17), generate(preset, 17));
        EXPECT_NE(generate(preset, 17), generate(preset, 18));
    }
}

TEST(Generate, AllPresetsValid) {
    for (const auto& preset : kPresets)
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
            const auto s = generate(preset, seed);
            EXPECT_TRUE(validate_scene(s).empty()) << preset << " " << seed;
            EXPECT_EQ(s.kind, SceneKind::GroundTruth);
            EXPECT_EQ(s.frame_id, preset + "-" + std::to_string(seed));
            EXPECT_GT(s.graph.size(), 0u);
        }
    EXPECT_THROW(generate("roundabout", 0), std::invalid_argument);
}

TEST(Generate, PresetStructure) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto d = generate("diverge", seed).graph;
        bool split = false;
        for (std::size_t i = 0; i < d.size(); ++i) split |= row_sum(d.adjacency, i) == 2.0;
        EXPECT_TRUE(split);

        const auto m = generate("merge", seed).graph;
        bool join = false;
        for (std::size_t j = 0; j < m.size(); ++j) join |= col_sum(m.adjacency, j) == 2.0;
        EXPECT_TRUE(join);

        const auto x = generate("intersection", seed).graph;
        bool hidden = false, crossing = false;
        for (const auto& s : x.segments) {
            hidden |= s.left_type == LineType::NonVisible || s.right_type == LineType::NonVisible;
            crossing |= s.lane_class == LaneClass::PedCrossing;
        }
        EXPECT_TRUE(hidden);
        EXPECT_TRUE(crossing);
    }
}

TEST(Generate, CorpusCyclesPresets) {
    const auto c = generate_corpus(12, 40);
    ASSERT_EQ(c.size(), 12u);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(c[i], generate(kPresets[i % kPresets.size()], 40 + i));
}

TEST(Perturb, ZeroSpecIsIdentity) {
    for (const auto& preset : kPresets) {
        const auto gt = generate(preset, 3);
        const auto p = perturb(gt, PerturbSpec{0.0, 0.0, 0.0, 0.0, 9});
        EXPECT_EQ(p, as_prediction(gt));
        for (const auto& s : p.graph.segments) EXPECT_EQ(s.confidence, 1.0);
    }
}

TEST(Perturb, DropAllIsEmpty) {
    const auto p = perturb(generate("intersection", 2), PerturbSpec{0.3, 1.0, 0.0, 0.0, 1});
    EXPECT_EQ(p.graph.size(), 0u);
    EXPECT_EQ(p.kind, SceneKind::Prediction);
}

TEST(Perturb, ConfidenceFromDisplacement) {
    const auto gt = generate("curve", 5);
    const auto p = perturb(gt, PerturbSpec{0.7, 0.0, 0.0, 0.0, 2});
    ASSERT_EQ(p.graph.size(), gt.graph.size());
    for (std::size_t i = 0; i < gt.graph.size(); ++i) {
        const auto& a = gt.graph.segments[i];
        const auto& b = p.graph.segments[i];
        double d = 0.0;
        for (std::size_t k = 0; k < kNumPoints; ++k)
            d += distance(a.centerline[k], b.centerline[k]) + distance(a.left_boundary[k], b.left_boundary[k]) +
                 distance(a.right_boundary[k], b.right_boundary[k]);
        d /= 3.0 * kNumPoints;
        EXPECT_NEAR(b.confidence, 1.0 / (1.0 + d), 1e-12);
        EXPECT_LT(b.confidence, 1.0);
        for (std::size_t k = 0; k < kNumPoints; ++k) EXPECT_EQ(a.centerline[k].z, b.centerline[k].z);
    }
}

TEST(Perturb, IndependentOfSegmentOrder) {
    const auto gt = generate("intersection", 6);
    Scene rev = gt;
    std::vector<LaneSegment> segs(gt.graph.segments.rbegin(), gt.graph.segments.rend());
    rev.graph = make_graph(segs);
    const std::size_t n = gt.graph.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) rev.graph.adjacency(n - 1 - i, n - 1 - j) = gt.graph.adjacency(i, j);
    const PerturbSpec spec{0.5, 0.3, 0.3, 0.2, 77};
    const auto a = perturb(gt, spec), b = perturb(rev, spec);
    ASSERT_EQ(a.graph.size(), b.graph.size());
    for (const auto& s : a.graph.segments) {
        const auto j = index_of(b.graph, s.id);
        ASSERT_GE(j, 0);
        EXPECT_EQ(b.graph.segments[static_cast<std::size_t>(j)], s);
    }
    for (std::size_t i = 0; i < a.graph.size(); ++i)
        for (std::size_t j = 0; j < a.graph.size(); ++j) {
            const auto bi = static_cast<std::size_t>(index_of(b.graph, a.graph.segments[i].id));
            const auto bj = static_cast<std::size_t>(index_of(b.graph, a.graph.segments[j].id));
            EXPECT_EQ(a.graph.adjacency(i, j), b.graph.adjacency(bi, bj));
        }
}

TEST(Perturb, FlipsHappenAtFullProbability) {
    const auto gt = generate("straight", 1);
    const auto p = perturb(gt, PerturbSpec{0.0, 0.0, 1.0, 1.0, 4});
    for (std::size_t i = 0; i < gt.graph.size(); ++i) {
        EXPECT_NE(p.graph.segments[i].left_type, gt.graph.segments[i].left_type);
        EXPECT_NE(p.graph.segments[i].right_type, gt.graph.segments[i].right_type);
        for (std::size_t j = 0; j < gt.graph.size(); ++j)
            if (i != j) {
                EXPECT_EQ(p.graph.adjacency(i, j), 1.0 - gt.graph.adjacency(i, j));
            }
    }
}

TEST(Perturb, RejectsBadSpec) {
    const auto gt = generate("straight", 1);
    EXPECT_THROW(perturb(gt, PerturbSpec{-1.0, 0, 0, 0, 0}), std::invalid_argument);
    EXPECT_THROW(perturb(gt, PerturbSpec{0.0, 1.5, 0, 0, 0}), std::invalid_argument);
}

TEST(Perturb, MapDecreasesWithNoise) {
    const auto corpus = generate_corpus(20, 500);
    double prev = 2.0;
    for (double sigma : {0.1, 0.5, 2.0}) {
        std::vector<Scene> preds;
        for (const auto& g : corpus) preds.push_back(perturb(g, PerturbSpec{sigma, 0.0, 0.0, 0.0, 21}));
        const double m = evaluate_laneseg(corpus, preds).at("mAP");
        EXPECT_LE(m, prev) << sigma;
        prev = m;
    }
}
