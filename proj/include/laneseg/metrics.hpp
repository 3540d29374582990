#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "assignment.hpp"
#include "core.hpp"
#include "geometry.hpp"
#include "parallel.hpp"
#include "preprocess.hpp"

namespace laneseg {

/// Lane-segment distance: half the sum of the boundary Chamfer distance (left
/// and right boundaries pooled into one point set per side) and the
/// centerline Fréchet distance.
inline double d_ls(const LaneSegment& pred, const LaneSegment& gt) {
    require(pred.lane_class == LaneClass::LaneSegment && gt.lane_class == LaneClass::LaneSegment,
            "d_ls: both segments must be lane segments");
    std::vector<Point3> a(pred.left_boundary.begin(), pred.left_boundary.end());
    a.insert(a.end(), pred.right_boundary.begin(), pred.right_boundary.end());
    std::vector<Point3> b(gt.left_boundary.begin(), gt.left_boundary.end());
    b.insert(b.end(), gt.right_boundary.begin(), gt.right_boundary.end());
    return 0.5 * (chamfer(a, b) + frechet_discrete(pred.centerline, gt.centerline));
}

/// Chamfer over both boundaries pooled; used for crossings.
inline double boundary_chamfer(const LaneSegment& pred, const LaneSegment& gt) {
    return chamfer(ring_of(pred), ring_of(gt));
}

/// One frame's detections for a single class: prediction confidences and ids
/// plus the pred x gt distance matrix.
struct FrameDistances {
    std::vector<double> confidence;
    std::vector<int> ids;
    std::size_t gt_count = 0;
    Matrix distance;  // pred x gt
};

struct ApResult {
    double ap = 0.0;
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> true_positives;  // per frame (pred, gt)
};

/// Average precision at one distance threshold. Predictions are ranked
/// dataset-wide by descending confidence (ties: ascending id, then frame,
/// then position); each takes the nearest still-unmatched gt of its frame
/// with distance < threshold. AP is the area under the precision-recall
/// curve with the precision envelope made monotone.
inline ApResult average_precision(const std::vector<FrameDistances>& frames, double threshold) {
    struct Entry {
        double conf;
        int id;
        std::size_t frame;
        std::size_t pred;
    };
    std::vector<Entry> ranked;
    std::size_t total_gt = 0;
    for (std::size_t f = 0; f < frames.size(); ++f) {
        total_gt += frames[f].gt_count;
        for (std::size_t i = 0; i < frames[f].confidence.size(); ++i)
            ranked.push_back({frames[f].confidence[i], frames[f].ids[i], f, i});
    }
    std::sort(ranked.begin(), ranked.end(), [](const Entry& a, const Entry& b) {
        if (a.conf != b.conf) return a.conf > b.conf;
        if (a.id != b.id) return a.id < b.id;
        if (a.frame != b.frame) return a.frame < b.frame;
        return a.pred < b.pred;
    });

    ApResult out;
    out.true_positives.resize(frames.size());
    std::vector<std::vector<char>> taken(frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f) taken[f].assign(frames[f].gt_count, 0);

    std::vector<char> is_tp(ranked.size(), 0);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        const auto& e = ranked[r];
        const auto& fd = frames[e.frame];
        double best = std::numeric_limits<double>::infinity();
        std::ptrdiff_t best_gt = -1;
        for (std::size_t g = 0; g < fd.gt_count; ++g) {
            if (taken[e.frame][g]) continue;
            const double d = fd.distance(e.pred, g);
            if (d < threshold && d < best) {
                best = d;
                best_gt = static_cast<std::ptrdiff_t>(g);
            }
        }
        if (best_gt >= 0) {
            taken[e.frame][static_cast<std::size_t>(best_gt)] = 1;
            is_tp[r] = 1;
            out.true_positives[e.frame].emplace_back(e.pred, static_cast<std::size_t>(best_gt));
        }
    }
    for (auto& tp : out.true_positives) std::sort(tp.begin(), tp.end());
    if (total_gt == 0 || ranked.empty()) return out;

    std::vector<double> precision(ranked.size()), recall(ranked.size());
    double tp = 0.0;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        tp += is_tp[r];
        precision[r] = tp / static_cast<double>(r + 1);
        recall[r] = tp / static_cast<double>(total_gt);
    }
    for (std::size_t r = ranked.size() - 1; r-- > 0;) precision[r] = std::max(precision[r], precision[r + 1]);
    double ap = 0.0, prev_recall = 0.0;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        ap += (recall[r] - prev_recall) * precision[r];
        prev_recall = recall[r];
    }
    out.ap = ap;
    return out;
}

/// Builds per-frame distance matrices for items of one class and runs
/// average_precision. `Item` needs `confidence` and `id` members.
template <typename Item, typename DistanceFn>
std::vector<FrameDistances> frame_distances(const std::vector<std::vector<Item>>& preds,
                                            const std::vector<std::vector<Item>>& gts, DistanceFn&& distance_fn) {
    require(preds.size() == gts.size(), "frame_distances: frame count mismatch");
    std::vector<FrameDistances> frames(preds.size());
    parallel_for(preds.size(), [&](std::size_t f) {
        auto& fd = frames[f];
        fd.gt_count = gts[f].size();
        fd.distance = Matrix(preds[f].size(), gts[f].size());
        for (std::size_t i = 0; i < preds[f].size(); ++i) {
            fd.confidence.push_back(preds[f][i].confidence);
            fd.ids.push_back(preds[f][i].id);
            for (std::size_t j = 0; j < gts[f].size(); ++j) fd.distance(i, j) = distance_fn(preds[f][i], gts[f][j]);
        }
    });
    return frames;
}

template <typename Item, typename DistanceFn>
double average_precision(const std::vector<std::vector<Item>>& preds, const std::vector<std::vector<Item>>& gts,
                         DistanceFn&& distance_fn, double threshold) {
    return average_precision(frame_distances(preds, gts, distance_fn), threshold).ap;
}

/// Per-vertex TOP terms; TOP = sum / count.
struct TopTerms {
    double sum = 0.0;
    std::size_t count = 0;
    double value() const { return count == 0 ? 0.0 : sum / static_cast<double>(count); }
};

inline constexpr double kTopEdgeThreshold = 0.05;

/// For every gt vertex with at least one successor: the matched prediction's
/// successors scoring >= edge_threshold are ranked by score (ties: index),
/// and the precision at each rank that hits a true successor is summed and
/// divided by the true successor count. Unmatched gt vertices add 0.
inline TopTerms top_terms(const Matrix& pred_adjacency, const Matrix& gt_adjacency, const Assignment& vertex_match,
                          double edge_threshold = kTopEdgeThreshold) {
    require(pred_adjacency.rows == pred_adjacency.cols && gt_adjacency.rows == gt_adjacency.cols,
            "top_metric: adjacency must be square");
    const std::size_t np = pred_adjacency.rows;
    const std::size_t ng = gt_adjacency.rows;
    std::vector<std::ptrdiff_t> pred_of(ng, -1), gt_of(np, -1);
    for (const auto& [p, g] : vertex_match.pairs) {
        require(p < np && g < ng, "top_metric: match index out of range");
        pred_of[g] = static_cast<std::ptrdiff_t>(p);
        gt_of[p] = static_cast<std::ptrdiff_t>(g);
    }
    TopTerms t;
    for (std::size_t v = 0; v < ng; ++v) {
        std::size_t true_count = 0;
        for (std::size_t u = 0; u < ng; ++u) true_count += gt_adjacency(v, u) > 0.5;
        if (true_count == 0) continue;
        ++t.count;
        if (pred_of[v] < 0) continue;
        const auto pv = static_cast<std::size_t>(pred_of[v]);
        std::vector<std::size_t> ranked;
        for (std::size_t j = 0; j < np; ++j)
            if (j != pv && pred_adjacency(pv, j) >= edge_threshold) ranked.push_back(j);
        std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
            return pred_adjacency(pv, a) > pred_adjacency(pv, b);
        });
        double hits = 0.0, score = 0.0;
        for (std::size_t r = 0; r < ranked.size(); ++r) {
            const auto g = gt_of[ranked[r]];
            if (g >= 0 && gt_adjacency(v, static_cast<std::size_t>(g)) > 0.5) {
                hits += 1.0;
                score += hits / static_cast<double>(r + 1);
            }
        }
        t.sum += score / static_cast<double>(true_count);
    }
    return t;
}

inline double top_metric(const Matrix& pred_adjacency, const Matrix& gt_adjacency, const Assignment& vertex_match,
                         double edge_threshold = kTopEdgeThreshold) {
    return top_terms(pred_adjacency, gt_adjacency, vertex_match, edge_threshold).value();
}

/// Metric values in [0,1] (AE_type in percent, AE_dist in meters).
struct EvalReport {
    std::string task;
    std::size_t frame_count = 0;
    std::map<std::string, double> metrics;
    std::map<std::string, double> per_threshold;

    double at(const std::string& key) const { return metrics.at(key); }
};

inline const std::vector<double> kLaneSegThresholds{1.0, 2.0, 3.0};
inline const std::vector<double> kChamferThresholds{0.5, 1.0, 1.5};
inline const std::vector<double> kCenterlineThresholds{1.0, 2.0, 3.0};

namespace detail {

inline void check_frames(const std::vector<Scene>& gts, const std::vector<Scene>& preds) {
    require(gts.size() == preds.size(), "evaluate: gt and prediction frame counts differ");
    for (std::size_t f = 0; f < gts.size(); ++f)
        require(gts[f].frame_id == preds[f].frame_id,
                "evaluate: frame id mismatch at position " + std::to_string(f) + ": '" + gts[f].frame_id +
                    "' vs '" + preds[f].frame_id + "'");
}

struct IndexedSegment {
    const LaneSegment* seg;
    std::size_t index;  // position in the frame's segment list
    double confidence;
    int id;
};

inline std::vector<std::vector<IndexedSegment>> select(const std::vector<Scene>& scenes, LaneClass cls) {
    std::vector<std::vector<IndexedSegment>> out(scenes.size());
    for (std::size_t f = 0; f < scenes.size(); ++f) {
        const auto& segs = scenes[f].graph.segments;
        for (std::size_t i = 0; i < segs.size(); ++i)
            if (segs[i].lane_class == cls) out[f].push_back({&segs[i], i, segs[i].confidence, segs[i].id});
    }
    return out;
}

inline std::string threshold_key(const std::string& name, double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "@%.1f", t);
    return name + buf;
}

// Mean AP over thresholds; records the breakdown and returns the true
// positives found at the last (loosest) threshold.
inline double mean_ap(const std::vector<FrameDistances>& frames, const std::vector<double>& thresholds,
                      const std::string& name, EvalReport& report, ApResult* loosest) {
    double sum = 0.0;
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
        auto res = average_precision(frames, thresholds[k]);
        report.per_threshold[threshold_key(name, thresholds[k])] = res.ap;
        sum += res.ap;
        if (loosest && k + 1 == thresholds.size()) *loosest = std::move(res);
    }
    return sum / static_cast<double>(thresholds.size());
}

// Vertex matches over full segment indices from class-filtered true positives.
inline Assignment vertex_match(const std::vector<IndexedSegment>& preds, const std::vector<IndexedSegment>& gts,
                               const std::vector<std::pair<std::size_t, std::size_t>>& tps) {
    Assignment a;
    for (const auto& [p, g] : tps) a.pairs.emplace_back(preds[p].index, gts[g].index);
    std::sort(a.pairs.begin(), a.pairs.end());
    return a;
}

}  // namespace detail

/// Lane-segment benchmark: AP_ls (D_ls at 1/2/3 m), AP_ped (Chamfer at
/// 0.5/1.0/1.5 m), mAP, TOP_lsls, AE_dist and AE_type.
inline EvalReport evaluate_laneseg(const std::vector<Scene>& gts, const std::vector<Scene>& preds) {
    detail::check_frames(gts, preds);
    EvalReport report;
    report.task = "laneseg";
    report.frame_count = gts.size();

    const auto gt_ls = detail::select(gts, LaneClass::LaneSegment);
    const auto pr_ls = detail::select(preds, LaneClass::LaneSegment);
    const auto gt_ped = detail::select(gts, LaneClass::PedCrossing);
    const auto pr_ped = detail::select(preds, LaneClass::PedCrossing);

    const auto ls_frames = frame_distances(pr_ls, gt_ls, [](const auto& p, const auto& g) { return d_ls(*p.seg, *g.seg); });
    const auto ped_frames =
        frame_distances(pr_ped, gt_ped, [](const auto& p, const auto& g) { return boundary_chamfer(*p.seg, *g.seg); });

    ApResult ls_loose, ped_loose;
    const double ap_ls = detail::mean_ap(ls_frames, kLaneSegThresholds, "AP_ls", report, &ls_loose);
    const double ap_ped = detail::mean_ap(ped_frames, kChamferThresholds, "AP_ped", report, &ped_loose);

    TopTerms top;
    double dist_sum = 0.0, type_err = 0.0;
    std::size_t tp_count = 0;
    for (std::size_t f = 0; f < gts.size(); ++f) {
        Assignment match = detail::vertex_match(pr_ls[f], gt_ls[f], ls_loose.true_positives[f]);
        const Assignment ped = detail::vertex_match(pr_ped[f], gt_ped[f], ped_loose.true_positives[f]);
        match.pairs.insert(match.pairs.end(), ped.pairs.begin(), ped.pairs.end());
        const auto t = top_terms(preds[f].graph.adjacency, gts[f].graph.adjacency, match);
        top.sum += t.sum;
        top.count += t.count;

        for (const auto& [p, g] : ls_loose.true_positives[f]) {
            dist_sum += ls_frames[f].distance(p, g);
            const auto& ps = *pr_ls[f][p].seg;
            const auto& gs = *gt_ls[f][g].seg;
            type_err += (ps.left_type != gs.left_type || ps.right_type != gs.right_type) ? 1.0 : 0.0;
            ++tp_count;
        }
    }

    report.metrics["AP_ls"] = ap_ls;
    report.metrics["AP_ped"] = ap_ped;
    report.metrics["mAP"] = 0.5 * (ap_ls + ap_ped);
    report.metrics["TOP_lsls"] = top.value();
    report.metrics["AE_dist"] = tp_count ? dist_sum / static_cast<double>(tp_count) : 0.0;
    report.metrics["AE_type"] = tp_count ? 100.0 * type_err / static_cast<double>(tp_count) : 0.0;
    return report;
}

/// Map-element benchmark over decomposed scenes (see map_elements_to_scene):
/// per-class Chamfer AP at 0.5/1.0/1.5 m; mAP is the class mean.
inline EvalReport evaluate_mapele(const std::vector<Scene>& gts, const std::vector<Scene>& preds) {
    detail::check_frames(gts, preds);
    EvalReport report;
    report.task = "mapele";
    report.frame_count = gts.size();

    auto split = [](const std::vector<Scene>& scenes, MapElementClass cls) {
        std::vector<std::vector<MapElement>> out(scenes.size());
        for (std::size_t f = 0; f < scenes.size(); ++f)
            for (auto& e : map_elements_from_scene(scenes[f]))
                if (e.element_class == cls) out[f].push_back(std::move(e));
        return out;
    };
    auto dist = [](const MapElement& a, const MapElement& b) { return chamfer(a.points(), b.points()); };

    const auto div_frames =
        frame_distances(split(preds, MapElementClass::Divider), split(gts, MapElementClass::Divider), dist);
    const auto ped_frames =
        frame_distances(split(preds, MapElementClass::PedCrossing), split(gts, MapElementClass::PedCrossing), dist);
    const double ap_div = detail::mean_ap(div_frames, kChamferThresholds, "AP_div", report, nullptr);
    const double ap_ped = detail::mean_ap(ped_frames, kChamferThresholds, "AP_ped", report, nullptr);
    report.metrics["AP_div"] = ap_div;
    report.metrics["AP_ped"] = ap_ped;
    report.metrics["mAP"] = 0.5 * (ap_div + ap_ped);
    return report;
}

/// Centerline benchmark: DET_l (Fréchet AP at 1/2/3 m), TOP_ll, and
/// OLS = (DET_l + sqrt(TOP_ll)) / 2.
inline EvalReport evaluate_centerline(const std::vector<Scene>& gts, const std::vector<Scene>& preds) {
    detail::check_frames(gts, preds);
    EvalReport report;
    report.task = "centerline";
    report.frame_count = gts.size();

    const auto gt_cl = detail::select(gts, LaneClass::LaneSegment);
    const auto pr_cl = detail::select(preds, LaneClass::LaneSegment);
    const auto frames = frame_distances(
        pr_cl, gt_cl, [](const auto& p, const auto& g) { return frechet_discrete(p.seg->centerline, g.seg->centerline); });
    ApResult loose;
    const double det = detail::mean_ap(frames, kCenterlineThresholds, "DET_l", report, &loose);

    TopTerms top;
    for (std::size_t f = 0; f < gts.size(); ++f) {
        const auto t = top_terms(preds[f].graph.adjacency, gts[f].graph.adjacency,
                                 detail::vertex_match(pr_cl[f], gt_cl[f], loose.true_positives[f]));
        top.sum += t.sum;
        top.count += t.count;
    }
    report.metrics["DET_l"] = det;
    report.metrics["TOP_ll"] = top.value();
    report.metrics["OLS"] = 0.5 * (det + std::sqrt(top.value()));
    return report;
}

}  // namespace laneseg
