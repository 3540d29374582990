#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>

#include "assignment.hpp"
#include "core.hpp"
#include "geometry.hpp"

namespace laneseg {

inline constexpr double kProbEps = 1e-7;

inline double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

struct LossWeights {
    double vec = 0.025;
    double seg = 3.0;
    double ce = 1.0;
    double dice = 1.0;
    double cls = 1.5;
    double type = 0.01;
    double top = 5.0;
};

/// Sigmoid focal loss: -alpha_t (1 - p_t)^gamma ln p_t, with alpha_t = alpha
/// for positives and 1 - alpha for negatives.
inline double focal(double prob, int target, double alpha = 0.25, double gamma = 2.0) {
    const double p = clamp_prob(prob);
    const double pt = target == 1 ? p : 1.0 - p;
    const double at = target == 1 ? alpha : 1.0 - alpha;
    return -at * std::pow(1.0 - pt, gamma) * std::log(pt);
}

/// Mean absolute coordinate difference over the three lines.
inline double l1_vec(const LaneSegment& pred, const LaneSegment& gt) {
    const auto n = gt.centerline.size();
    require(pred.centerline.size() == n && pred.left_boundary.size() == n && pred.right_boundary.size() == n &&
                gt.left_boundary.size() == n && gt.right_boundary.size() == n,
            "l1_vec: line shapes differ");
    double sum = 0.0;
    auto acc = [&sum](const Polyline3& a, const Polyline3& b) {
        for (std::size_t i = 0; i < a.size(); ++i)
            sum += std::abs(a[i].x - b[i].x) + std::abs(a[i].y - b[i].y) + std::abs(a[i].z - b[i].z);
    };
    acc(pred.centerline, gt.centerline);
    acc(pred.left_boundary, gt.left_boundary);
    acc(pred.right_boundary, gt.right_boundary);
    return sum / static_cast<double>(3 * n * 3);
}

struct MaskTerms {
    double ce = 0.0;
    double dice = 0.0;
};

/// Mean BCE of sigmoid(logits) and soft dice with smoothing 1.
inline MaskTerms mask_terms(const Matrix& logits, const BinaryMask& target) {
    require(logits.rows == target.H && logits.cols == target.W, "mask_loss: shape mismatch");
    constexpr double kSmooth = 1.0;
    double bce = 0.0, inter = 0.0, sp = 0.0, st = 0.0;
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        const double p = clamp_prob(sigmoid(logits.data[i]));
        const double t = target.cells[i];
        bce += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
        inter += p * t;
        sp += p;
        st += t;
    }
    MaskTerms out;
    out.ce = logits.data.empty() ? 0.0 : bce / static_cast<double>(logits.data.size());
    out.dice = 1.0 - (2.0 * inter + kSmooth) / (sp + st + kSmooth);
    return out;
}

inline double mask_loss(const Matrix& logits, const BinaryMask& target, double ce_weight, double dice_weight) {
    const auto t = mask_terms(logits, target);
    return ce_weight * t.ce + dice_weight * t.dice;
}

using TypeProbs = std::array<double, 3>;  // indexed by LineType

/// Mean cross-entropy of the left and right boundary-type distributions.
inline double ce_linetype(const TypeProbs& left, const TypeProbs& right, LineType gt_left, LineType gt_right) {
    for (const auto* d : {&left, &right}) {
        double s = 0.0;
        for (double v : *d) {
            require(v >= 0.0 && std::isfinite(v), "ce_linetype: invalid probability");
            s += v;
        }
        require(std::abs(s - 1.0) <= 1e-6, "ce_linetype: distribution does not sum to 1");
    }
    const double l = -std::log(clamp_prob(left[static_cast<std::size_t>(gt_left)]));
    const double r = -std::log(clamp_prob(right[static_cast<std::size_t>(gt_right)]));
    return 0.5 * (l + r);
}

/// Mean focal loss over off-diagonal predicted successor scores. Targets come
/// from projecting the ground-truth adjacency through the assignment; any
/// entry involving an unmatched prediction has target 0.
inline double topology_loss(const Matrix& pred_scores, const Matrix& gt_adjacency, const Assignment& match) {
    require(pred_scores.rows == pred_scores.cols, "topology_loss: prediction scores not square");
    require(gt_adjacency.rows == gt_adjacency.cols, "topology_loss: gt adjacency not square");
    const std::size_t n = pred_scores.rows;
    if (n < 2) return 0.0;
    std::vector<std::ptrdiff_t> gt_of(n, -1);
    for (const auto& [p, g] : match.pairs) {
        require(p < n && g < gt_adjacency.rows, "topology_loss: assignment index out of range");
        gt_of[p] = static_cast<std::ptrdiff_t>(g);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            int target = 0;
            if (gt_of[i] >= 0 && gt_of[j] >= 0)
                target = gt_adjacency(static_cast<std::size_t>(gt_of[i]), static_cast<std::size_t>(gt_of[j])) > 0.5;
            sum += focal(pred_scores(i, j), target);
        }
    }
    return sum / static_cast<double>(n * (n - 1));
}

struct LossParts {
    double vec = 0.0;
    double ce = 0.0;
    double dice = 0.0;
    double cls = 0.0;
    double type = 0.0;
    double top = 0.0;
};

inline double total_loss(const LossParts& parts, const LossWeights& w = {}) {
    for (double v : {parts.vec, parts.ce, parts.dice, parts.cls, parts.type, parts.top})
        require(std::isfinite(v), "total_loss: non-finite loss part");
    return w.vec * parts.vec + w.seg * (w.ce * parts.ce + w.dice * parts.dice) + w.cls * parts.cls +
           w.type * parts.type + w.top * parts.top;
}

}  // namespace laneseg
