#pragma once

#include <array>
#include <cmath>
#include <optional>

#include "assignment.hpp"
#include "losses.hpp"

namespace laneseg {

/// A decoded prediction with the per-class and per-type probabilities the
/// matcher consumes. Class probabilities are independent sigmoids.
struct SegmentPrediction {
    LaneSegment segment;
    std::array<double, 2> class_prob{0.5, 0.5};  // indexed by LaneClass
    TypeProbs left_type_prob{1.0 / 3, 1.0 / 3, 1.0 / 3};
    TypeProbs right_type_prob{1.0 / 3, 1.0 / 3, 1.0 / 3};
    std::optional<Matrix> mask_logits;
};

struct SegmentTarget {
    LaneSegment segment;
    std::optional<BinaryMask> mask;
};

/// Focal classification cost on the target-class probability p:
///   alpha (1-p)^gamma (-ln p) - (1-alpha) p^gamma (-ln(1-p)) + (1-alpha) (-ln eps)
/// The last term is the largest value the negative part reaches under eps
/// clamping, so the cost is never negative and vanishes as p -> 1.
inline double focal_match_cost(double prob, double alpha = 0.25, double gamma = 2.0) {
    const double p = clamp_prob(prob);
    const double pos = alpha * std::pow(1.0 - p, gamma) * -std::log(p);
    const double neg = (1.0 - alpha) * std::pow(p, gamma) * -std::log(1.0 - p);
    // evaluated at the clamped maximum exactly as the negative term is, so
    // the cost at p = 1 is zero rather than a rounding error below it
    const double top = clamp_prob(1.0);
    const double offset = (1.0 - alpha) * std::pow(top, gamma) * -std::log(1.0 - top);
    return pos - neg + offset;
}

struct MatchingTerms {
    double cls = 0.0;
    double type = 0.0;
    double vec = 0.0;
    double mask = 0.0;  // already lambda_ce/lambda_dice weighted, before lambda_seg
};

inline MatchingTerms matching_terms(const SegmentPrediction& pred, const SegmentTarget& gt, const LossWeights& w = {}) {
    require(pred.segment.centerline.size() == gt.segment.centerline.size(), "matching_cost: point counts differ");
    MatchingTerms t;
    t.cls = focal_match_cost(pred.class_prob[static_cast<std::size_t>(gt.segment.lane_class)]);
    t.type = ce_linetype(pred.left_type_prob, pred.right_type_prob, gt.segment.left_type, gt.segment.right_type);
    t.vec = l1_vec(pred.segment, gt.segment);
    if (pred.mask_logits && gt.mask) t.mask = mask_loss(*pred.mask_logits, *gt.mask, w.ce, w.dice);
    return t;
}

/// Pairwise cost used by the bipartite matcher; the weights are the training
/// loss weights.
inline double matching_cost(const SegmentPrediction& pred, const SegmentTarget& gt, const LossWeights& w = {}) {
    const auto t = matching_terms(pred, gt, w);
    return w.cls * t.cls + w.type * t.type + w.vec * t.vec + w.seg * t.mask;
}

}  // namespace laneseg
