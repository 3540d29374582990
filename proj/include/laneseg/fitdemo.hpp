#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "refine.hpp"
#include "scenegen.hpp"

namespace laneseg {

struct FitProblem {
    BevGrid grid;
    Vector query;
    LaneSegment target;
};

/// Seeded single-scene problem: random N(0,1) feature grid, random content
/// query and the first segment of the seeded "straight" scene as target.
inline FitProblem make_fit_problem(const FitOptions& opt) {
    FitProblem p;
    const Scene scene = generate("straight", opt.seed);
    p.target = scene.graph.segments.front();
    std::mt19937_64 rng(detail::splitmix64(opt.seed ^ 0xF17D3A0ULL));
    std::normal_distribution<double> nd(0.0, 1.0);
    p.grid = BevGrid(GridSpec{200, 100, scene.range}, opt.channels);
    for (double& v : p.grid.data) v = nd(rng);
    p.query.resize(opt.channels);
    for (double& v : p.query) v = nd(rng);
    return p;
}

/// Trains lane attention, feed-forward and regression heads of an L-layer
/// refinement stack on lambda_vec * l1_vec. Fully deterministic.
inline FitReport run_fit_demo(const FitOptions& opt, const FitProblem& problem) {
    RefinementModel model = make_refinement_model(opt);
    const double lambda = LossWeights{}.vec;
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;

    std::vector<std::vector<double>> m1, m2;
    model.for_each_trainable([&](std::span<double> t) {
        m1.emplace_back(t.size(), 0.0);
        m2.emplace_back(t.size(), 0.0);
    });

    FitReport report;
    RefinementModelGrads grads;
    for (std::size_t step = 0; step < opt.steps; ++step) {
        const double loss = fit_loss_and_grads(model, problem.query, problem.grid, problem.target, lambda, grads);
        report.history.push_back(loss);
        std::vector<std::span<double>> g;
        grads.for_each_trainable([&](std::span<double> t) { g.push_back(t); });
        const double b1 = 1.0 - std::pow(kBeta1, static_cast<double>(step + 1));
        const double b2 = 1.0 - std::pow(kBeta2, static_cast<double>(step + 1));
        std::size_t i = 0;
        model.for_each_trainable([&](std::span<double> w) {
            for (std::size_t j = 0; j < w.size(); ++j) {
                const double gj = g[i][j];
                if (!opt.adam) {
                    w[j] -= opt.learning_rate * gj;
                    continue;
                }
                m1[i][j] = kBeta1 * m1[i][j] + (1.0 - kBeta1) * gj;
                m2[i][j] = kBeta2 * m2[i][j] + (1.0 - kBeta2) * gj * gj;
                w[j] -= opt.learning_rate * (m1[i][j] / b1) / (std::sqrt(m2[i][j] / b2) + kAdamEps);
            }
            ++i;
        });
    }
    report.steps = opt.steps;
    report.final_loss = fit_loss(model, problem.query, problem.grid, problem.target, lambda);
    report.history.push_back(report.final_loss);
    report.initial_loss = report.history.front();
    report.best_loss = report.final_loss;
    for (double v : report.history) report.best_loss = std::min(report.best_loss, v);
    return report;
}

inline FitReport run_fit_demo(const FitOptions& opt) { return run_fit_demo(opt, make_fit_problem(opt)); }

}  // namespace laneseg
