#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "laneseg/core.hpp"
#include "laneseg/geometry.hpp"

namespace testutil {

using namespace laneseg;

/// Straight lane along +x at lateral position y, half width hw, n points.
inline LaneSegment straight_lane(int id, double x0, double x1, double y, double hw = 1.75,
                                 std::size_t n = kNumPoints, LineType l = LineType::Solid,
                                 LineType r = LineType::Dashed) {
    LaneSegment s;
    s.id = id;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = x0 + (x1 - x0) * static_cast<double>(i) / static_cast<double>(n - 1);
        s.centerline.push_back({x, y, 0.0});
        s.left_boundary.push_back({x, y + hw, 0.0});
        s.right_boundary.push_back({x, y - hw, 0.0});
    }
    s.left_type = l;
    s.right_type = r;
    return s;
}

inline Scene scene_of(std::vector<LaneSegment> segs, SceneKind kind = SceneKind::GroundTruth) {
    Scene s;
    s.frame_id = "f0";
    s.kind = kind;
    s.graph = make_graph(std::move(segs));
    return s;
}

inline double shoelace(const Polygon2& p) {
    double a = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& u = p[i];
        const auto& v = p[(i + 1) % p.size()];
        a += u.x * v.y - v.x * u.y;
    }
    return 0.5 * std::abs(a);
}

template <typename Rng>
Polyline3 random_polyline(Rng& rng, std::size_t n, double scale = 10.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Polyline3 p;
    for (std::size_t i = 0; i < n; ++i) p.push_back({u(rng), u(rng), u(rng)});
    return p;
}

}  // namespace testutil
