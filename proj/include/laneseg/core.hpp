#pragma once

#include <cmath>
#include <cstddef>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "linalg.hpp"

namespace laneseg {

/// Number of points per line in the benchmark representation.
inline constexpr std::size_t kNumPoints = 10;

/// Ego BEV frame point in meters: x forward, y left, z up.
struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend Point3 operator+(Point3 a, Point3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Point3 operator-(Point3 a, Point3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Point3 operator*(double s, Point3 a) { return {s * a.x, s * a.y, s * a.z}; }
    friend bool operator==(const Point3&, const Point3&) = default;
};

inline double norm(Point3 p) { return std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z); }
inline double distance(Point3 a, Point3 b) { return norm(a - b); }

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

/// Ordered point sequence; direction is first -> last.
using Polyline3 = std::vector<Point3>;
using Polygon2 = std::vector<Point2>;

enum class LineType { NonVisible, Solid, Dashed };
enum class LaneClass { LaneSegment, PedCrossing };

inline const char* to_string(LineType t) {
    switch (t) {
        case LineType::NonVisible: return "non_visible";
        case LineType::Solid: return "solid";
        case LineType::Dashed: return "dashed";
    }
    return "?";
}

inline const char* to_string(LaneClass c) {
    return c == LaneClass::LaneSegment ? "lane_segment" : "ped_crossing";
}

/// One lane: centerline plus both boundaries sharing a point count, boundary
/// line types and class. Ground truth carries confidence 1.0.
struct LaneSegment {
    int id = 0;
    Polyline3 centerline;
    Polyline3 left_boundary;
    Polyline3 right_boundary;
    LineType left_type = LineType::NonVisible;
    LineType right_type = LineType::NonVisible;
    LaneClass lane_class = LaneClass::LaneSegment;
    double confidence = 1.0;

    friend bool operator==(const LaneSegment&, const LaneSegment&) = default;
};

/// Segments plus a square successor-score matrix: entry (i, j) scores
/// segment j following segment i.
struct LaneGraph {
    std::vector<LaneSegment> segments;
    Matrix adjacency;

    std::size_t size() const { return segments.size(); }
    friend bool operator==(const LaneGraph&, const LaneGraph&) = default;
};

/// Axis-aligned BEV rectangle in meters.
struct BevRange {
    double x_min = -50.0;
    double x_max = 50.0;
    double y_min = -25.0;
    double y_max = 25.0;

    double x_extent() const { return x_max - x_min; }
    double y_extent() const { return y_max - y_min; }
    friend bool operator==(const BevRange&, const BevRange&) = default;
};

enum class SceneKind { GroundTruth, Prediction };

struct Scene {
    std::string frame_id;
    LaneGraph graph;
    BevRange range;
    SceneKind kind = SceneKind::GroundTruth;

    friend bool operator==(const Scene&, const Scene&) = default;
};

/// Boundaries from a centerline and a per-point half-width offset:
/// left = center + offset, right = center - offset.
struct Boundaries {
    Polyline3 left;
    Polyline3 right;
};

inline Boundaries from_center_and_offset(std::span<const Point3> center, std::span<const Point3> offset) {
    require(center.size() == offset.size(), "from_center_and_offset: center and offset lengths differ");
    Boundaries b;
    b.left.reserve(center.size());
    b.right.reserve(center.size());
    for (std::size_t i = 0; i < center.size(); ++i) {
        b.left.push_back(center[i] + offset[i]);
        b.right.push_back(center[i] - offset[i]);
    }
    return b;
}

/// Drivable-area polygon: left boundary followed by the reversed right
/// boundary, projected to (x, y). Closure is implicit (last -> first).
inline Polygon2 polygon_of(const LaneSegment& seg) {
    Polygon2 poly;
    poly.reserve(seg.left_boundary.size() + seg.right_boundary.size());
    for (const auto& p : seg.left_boundary) poly.push_back({p.x, p.y});
    for (auto it = seg.right_boundary.rbegin(); it != seg.right_boundary.rend(); ++it) poly.push_back({it->x, it->y});
    return poly;
}

inline LaneGraph make_graph(std::vector<LaneSegment> segments) {
    LaneGraph g;
    const auto n = segments.size();
    g.segments = std::move(segments);
    g.adjacency = Matrix(n, n, 0.0);
    return g;
}

inline std::ptrdiff_t index_of(const LaneGraph& g, int id) {
    for (std::size_t i = 0; i < g.segments.size(); ++i)
        if (g.segments[i].id == id) return static_cast<std::ptrdiff_t>(i);
    return -1;
}

struct Violation {
    int segment_id = -1;  // -1 for scene-level rules
    std::string rule;
    std::string detail;
    friend bool operator==(const Violation&, const Violation&) = default;
};

/// Checks every scene invariant and reports each breach; never throws.
/// `expected_points` pins the per-line point count (0 accepts any count >= 2).
inline std::vector<Violation> validate_scene(const Scene& scene, std::size_t expected_points = kNumPoints) {
    std::vector<Violation> out;
    constexpr double kSlack = 1.0;
    const auto& segs = scene.graph.segments;
    const auto& r = scene.range;

    if (!(r.x_max > r.x_min) || !(r.y_max > r.y_min)) out.push_back({-1, "range", "degenerate BEV range"});

    std::set<int> seen;
    for (const auto& s : segs) {
        if (!seen.insert(s.id).second) out.push_back({s.id, "duplicate-id", "segment id appears more than once"});

        const auto n = s.centerline.size();
        if (n < 2 || s.left_boundary.size() != n || s.right_boundary.size() != n ||
            (expected_points != 0 && n != expected_points)) {
            out.push_back({s.id, "point-count",
                           "lines have " + std::to_string(n) + "/" + std::to_string(s.left_boundary.size()) + "/" +
                               std::to_string(s.right_boundary.size()) + " points"});
        }

        bool finite = true;
        bool inside = true;
        for (const auto* line : {&s.centerline, &s.left_boundary, &s.right_boundary}) {
            for (const auto& p : *line) {
                if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
                    finite = false;
                    continue;
                }
                if (p.x < r.x_min - kSlack || p.x > r.x_max + kSlack || p.y < r.y_min - kSlack ||
                    p.y > r.y_max + kSlack)
                    inside = false;
            }
        }
        if (!finite) out.push_back({s.id, "non-finite", "point coordinate is not finite"});
        if (!inside) out.push_back({s.id, "out-of-range", "point outside BEV range beyond 1 m slack"});

        if (!(s.confidence >= 0.0 && s.confidence <= 1.0))
            out.push_back({s.id, "confidence-range", "confidence outside [0,1]"});
        if (scene.kind == SceneKind::GroundTruth && s.confidence != 1.0)
            out.push_back({s.id, "gt-confidence", "ground truth must carry confidence 1"});
        if (s.lane_class == LaneClass::PedCrossing &&
            (s.left_type != LineType::NonVisible || s.right_type != LineType::NonVisible))
            out.push_back({s.id, "crossing-line-type", "pedestrian crossing boundaries must be non-visible"});
    }

    const auto& a = scene.graph.adjacency;
    if (a.rows != segs.size() || a.cols != segs.size()) {
        out.push_back({-1, "adjacency-shape", "adjacency is not square over the segment count"});
        return out;
    }
    for (std::size_t i = 0; i < a.rows; ++i) {
        if (a(i, i) != 0.0) out.push_back({segs[i].id, "self-loop", "segment succeeds itself"});
        for (std::size_t j = 0; j < a.cols; ++j) {
            const double v = a(i, j);
            if (!(v >= 0.0 && v <= 1.0)) {
                out.push_back({segs[i].id, "adjacency-range", "successor score outside [0,1]"});
            } else if (scene.kind == SceneKind::GroundTruth && v != 0.0 && v != 1.0) {
                out.push_back({segs[i].id, "adjacency-binary", "ground-truth successor entry is not 0/1"});
            }
        }
    }
    return out;
}

}  // namespace laneseg
