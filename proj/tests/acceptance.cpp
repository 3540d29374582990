// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Every check runs against an independent oracle or a hand-built
// expectation, never against the implementation under test.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "laneseg/laneseg.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace laneseg;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

int failures = 0;

void run(const char* name, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0 && secs >= limit_s) {
        o.pass = false;
        o.detail += fmt("; over the %.0f s limit", limit_s);
    }
    if (!o.pass) ++failures;
    std::printf("%s  %-32s %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
}

Outcome assignment_optimality() {
    std::mt19937_64 rng(20240601);
    std::uniform_int_distribution<std::size_t> small(1, 7), large(1, 8);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::uniform_int_distribution<int> tie(0, 3);
    std::size_t mismatches = 0;
    for (int t = 0; t < 1000; ++t) {
        std::size_t r = small(rng), c = large(rng);
        if (t % 2) std::swap(r, c);
        if (std::min(r, c) > 7) continue;
        Matrix m(r, c);
        for (double& v : m.data) v = t % 4 == 3 ? static_cast<double>(tie(rng)) : u(rng);  // some tie-heavy
        if (hungarian(m).total_cost != oracle::assignment_bruteforce(m)) ++mismatches;
    }
    return {mismatches == 0, std::to_string(mismatches) + " mismatches over 1000 matrices"};
}

Outcome frechet_correctness() {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<std::size_t> n(1, 6);
    std::size_t mismatches = 0;
    for (int t = 0; t < 500; ++t) {
        const auto p = testutil::random_polyline(rng, n(rng));
        const auto q = testutil::random_polyline(rng, n(rng));
        if (frechet_discrete(p, q) != oracle::frechet_bruteforce(p, q)) ++mismatches;
    }
    return {mismatches == 0, std::to_string(mismatches) + " mismatches over 500 pairs"};
}

Outcome gradient_verification() {
    const auto r = run_gradcheck(0, 54);
    std::set<std::array<std::size_t, 3>> combos(r.configs.begin(), r.configs.end());
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu configs, %zu (M,K,C) combos; attention %zu partials, %zu failed; heads %zu partials, %zu failed",
                  r.trials, combos.size(), r.attention.checked, r.attention.failed, r.heads.checked, r.heads.failed);
    return {r.ok() && r.trials >= 50 && combos.size() == 18 && r.attention.checked > 0 && r.heads.checked > 0, buf};
}

Outcome attention_equivalence() {
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t M = kGradcheckHeads[t % 3], K = kGradcheckPoints[(t / 3) % 3],
                          C = kGradcheckChannels[(t / 9) % 2];
        const auto cfg = random_attention_config(M, K, C, rng, 0.0);
        const Vector fast = lane_attn_forward(cfg.query, cfg.refs, cfg.grid, cfg.params);
        const Vector slow = oracle::lane_attention_naive(cfg.query, cfg.refs, cfg.grid, cfg.params);
        double scale = 0.0, diff = 0.0;
        for (std::size_t i = 0; i < C; ++i) {
            scale = std::max(scale, std::abs(slow[i]));
            diff = std::max(diff, std::abs(fast[i] - slow[i]));
        }
        worst = std::max(worst, scale > 0 ? diff / scale : diff);
    }
    return {worst <= 1e-12, fmt("max relative deviation %.3e over 100 configs", worst)};
}

Outcome constant_field() {
    std::mt19937_64 rng(202);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> centre(0.3, 0.7), off(-3.0, 3.0);
    const std::size_t M = 8, K = 32, C = 16, H = 24, W = 24;
    Vector c(C);
    for (double& v : c) v = nd(rng);
    BevGrid grid(GridSpec{H, W, BevRange{}}, C);
    for (std::size_t i = 0; i < H * W; ++i)
        for (std::size_t k = 0; k < C; ++k) grid.data[i * C + k] = c[k];
    auto params = AttentionParams::zeros(M, K, C);
    params.for_each_tensor([&](std::span<double> t) {
        for (double& v : t) v = 0.5 * nd(rng);
    });
    std::fill(params.offset_weight.data.begin(), params.offset_weight.data.end(), 0.0);
    Vector expect(C, 0.0);
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t i = 0; i < C; ++i)
            for (std::size_t j = 0; j < C / M; ++j) {
                double wc = 0.0;
                for (std::size_t k = 0; k < C; ++k) wc += params.value_proj[m](j, k) * c[k];
                expect[i] += params.output_proj[m](i, j) * wc;
            }
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        for (double& v : params.offset_bias) v = off(rng);
        RefPoints refs;
        for (std::size_t m = 0; m < M; ++m) refs.points.push_back({centre(rng), centre(rng)});
        Vector q(C);
        for (double& v : q) v = nd(rng);
        const Vector y = lane_attn_forward(q, refs, grid, params);
        for (std::size_t i = 0; i < C; ++i) worst = std::max(worst, std::abs(y[i] - expect[i]));
    }
    return {worst <= 1e-9, fmt("max deviation %.3e over 100 draws", worst)};
}

Outcome perfect_fixed_points() {
    const auto gts = generate_corpus(25, 900);
    std::vector<Scene> preds, me, me_pred, cl, cl_pred;
    for (const auto& g : gts) {
        preds.push_back(as_prediction(g));
        me.push_back(map_elements_to_scene(decompose_to_map_elements(g.graph), g));
        me_pred.push_back(as_prediction(me.back()));
        Scene c = g;
        c.graph = extract_centerlines(g.graph);
        cl.push_back(c);
        cl_pred.push_back(as_prediction(c));
    }
    const auto a = evaluate_laneseg(gts, preds);
    const auto b = evaluate_mapele(me, me_pred);
    const auto c = evaluate_centerline(cl, cl_pred);
    const double dev = std::max({std::abs(a.at("mAP") - 1), std::abs(a.at("TOP_lsls") - 1), std::abs(a.at("AE_dist")),
                                 std::abs(a.at("AE_type")), std::abs(b.at("mAP") - 1), std::abs(c.at("DET_l") - 1),
                                 std::abs(c.at("TOP_ll") - 1), std::abs(c.at("OLS") - 1)});
    char buf[200];
    std::snprintf(buf, sizeof buf, "laneseg mAP %.1f TOP %.1f AE_dist %.1f AE_type %.1f; mapele mAP %.1f; OLS %.1f",
                  100 * a.at("mAP"), 100 * a.at("TOP_lsls"), a.at("AE_dist"), a.at("AE_type"), 100 * b.at("mAP"),
                  100 * c.at("OLS"));
    return {dev <= 1e-9, buf};
}

// "AP_ls@2.0" -> ("AP_ls", 2.0)
std::map<std::string, std::vector<std::pair<double, double>>> by_class(const std::map<std::string, double>& per) {
    std::map<std::string, std::vector<std::pair<double, double>>> out;
    for (const auto& [k, v] : per) {
        const auto at = k.find('@');
        out[k.substr(0, at)].push_back({std::stod(k.substr(at + 1)), v});
    }
    for (auto& [_, list] : out) std::sort(list.begin(), list.end());
    return out;
}

Outcome metric_monotonicity() {
    const auto corpus = generate_corpus(50, 1000);
    std::vector<double> maps;
    std::size_t violations = 0;
    for (double sigma : {0.1, 0.5, 2.0}) {
        std::vector<Scene> preds;
        for (const auto& g : corpus) preds.push_back(perturb(g, PerturbSpec{sigma, 0.0, 0.0, 0.0, 31}));
        const auto r = evaluate_laneseg(corpus, preds);
        maps.push_back(r.at("mAP"));
        const auto ls = by_class(r.per_threshold).at("AP_ls");
        if (ls.size() != 3 || ls[0].first != 1.0 || ls[2].first != 3.0) return {false, "unexpected AP_ls thresholds"};
        for (std::size_t i = 1; i < ls.size(); ++i)
            if (ls[i].second < ls[i - 1].second) ++violations;
    }
    const bool map_ok = maps[0] >= maps[1] && maps[1] >= maps[2];
    char buf[200];
    std::snprintf(buf, sizeof buf, "mAP %.2f >= %.2f >= %.2f; %zu threshold-order violations", 100 * maps[0],
                  100 * maps[1], 100 * maps[2], violations);
    return {map_ok && violations == 0, buf};
}

Outcome top_hand_case() {
    Matrix gt(4, 4), pred(4, 4);
    gt(0, 1) = gt(0, 2) = 1.0;
    pred(0, 1) = 0.9;
    pred(0, 3) = 0.8;
    pred(0, 2) = 0.7;
    Assignment id;
    for (std::size_t i = 0; i < 4; ++i) id.pairs.emplace_back(i, i);
    const double v = top_metric(pred, gt, id);
    return {std::abs(v - 5.0 / 6.0) <= 1e-12, fmt("TOP = %.15f", v)};
}

Outcome fit_demo() {
    FitOptions opt;
    const auto r = run_fit_demo(opt);
    char buf[200];
    std::snprintf(buf, sizeof buf, "optimizer %s, %zu steps, loss %.6f -> %.6f (ratio %.4f)", opt.adam ? "Adam" : "GD",
                  r.steps, r.initial_loss, r.final_loss, r.ratio());
    return {r.steps <= 2000 && r.ratio() < 0.1, buf};
}

Outcome preprocess_idempotence() {
    std::size_t problems = 0;
    const auto fx = fixture::fixtures();
    const auto expected = fixture::expected_merges();
    for (std::size_t f = 0; f < fx.size(); ++f) {
        const auto once = dfs_merge_pieces(fx[f]);
        if (dfs_merge_pieces(once) != once) ++problems;
        const auto g = pieces_to_graph(once);
        std::set<int> ids;
        std::set<std::pair<int, int>> edges;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ids.insert(g.segments[i].id);
            for (std::size_t j = 0; j < g.size(); ++j)
                if (g.adjacency(i, j) > 0.5) edges.insert({g.segments[i].id, g.segments[j].id});
        }
        if (ids != expected[f].ids || edges != expected[f].edges) ++problems;
    }
    for (const auto& preset : kPresets)
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto scene = generate(preset, seed);
            const auto once = dfs_merge(pieces_from_graph(scene.graph));
            const auto twice = dfs_merge(pieces_from_graph(once));
            if (twice.segments != once.segments || twice.adjacency != once.adjacency) ++problems;
            for (const auto& seg : scene.graph.segments) {
                if (seg.lane_class != LaneClass::PedCrossing) continue;
                const auto again = normalize_ped_crossing(ring_of(seg), seg.id);
                for (std::size_t k = 0; k < kNumPoints; ++k)
                    if (distance(again.left_boundary[k], seg.left_boundary[k]) > 1e-9 ||
                        distance(again.right_boundary[k], seg.right_boundary[k]) > 1e-9)
                        ++problems;
            }
        }
    return {problems == 0, std::to_string(fx.size()) + " fixtures, 50 generated scenes; " + std::to_string(problems) +
                               " problems"};
}

Outcome reference_point_contrast() {
    FitOptions opt;
    opt.init_scale = 0.1;  // default scale predicts a near-point segment
    const auto problem = make_fit_problem(opt);
    const auto model = make_refinement_model(opt);
    const auto first = identical_init(model.positional_query, model.ref_proj, opt.heads);
    const auto res = refine_iterate(problem.query, problem.grid, model.layers, head_predictor(model.heads), first);
    const double v1 = head_variance(res.layers[0].refs);
    const double v2 = head_variance(res.layers[1].refs);
    const double len = polyline_length(res.layers[0].segment.left_boundary);
    char buf[160];
    std::snprintf(buf, sizeof buf, "layer-1 variance %.3e, layer-2 variance %.3e (boundary length %.3f m)", v1, v2, len);
    return {v1 == 0.0 && v2 > 0.0 && len > 1.0, buf};
}

Outcome round_trip() {
    std::size_t files = 0, mismatches = 0;
    auto check = [&](const std::vector<Scene>& scenes) {
        const std::string a = serialize_scenes(scenes);
        if (serialize_scenes(parse_scenes(a)) != a) ++mismatches;
        ++files;
    };
    for (const auto& preset : kPresets)
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto g = generate(preset, seed);
            check({g});
            check({perturb(g, PerturbSpec{0.5, 0.2, 0.2, 0.2, seed})});
            check({map_elements_to_scene(decompose_to_map_elements(g.graph), g)});
            Scene c = g;
            c.graph = extract_centerlines(g.graph);
            check({c});
        }
    check(generate_corpus(20, 0));
    return {mismatches == 0, std::to_string(files) + " files, " + std::to_string(mismatches) + " byte mismatches"};
}

}  // namespace

int main() {
    run("assignment-optimality", 10, assignment_optimality);
    run("frechet-correctness", 5, frechet_correctness);
    run("gradient-verification", 60, gradient_verification);
    run("lane-attention-equivalence", 0, attention_equivalence);
    run("constant-field-invariance", 0, constant_field);
    run("perfect-prediction-fixed-points", 0, perfect_fixed_points);
    run("metric-monotonicity", 0, metric_monotonicity);
    run("top-hand-case", 0, top_hand_case);
    run("fit-demo", 120, fit_demo);
    run("preprocess-idempotence", 0, preprocess_idempotence);
    run("identical-vs-distributed", 0, reference_point_contrast);
    run("round-trip", 0, round_trip);
    std::printf("%d of 12 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
