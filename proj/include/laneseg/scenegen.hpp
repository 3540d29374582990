#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"
#include "geometry.hpp"
#include "preprocess.hpp"

namespace laneseg {

inline const std::vector<std::string> kPresets{"straight", "curve", "diverge", "merge", "intersection"};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t stream_key(std::uint64_t seed, std::string_view frame, std::int64_t a, std::int64_t b = 0) {
    std::uint64_t k = splitmix64(seed);
    k = splitmix64(k ^ fnv1a(frame));
    k = splitmix64(k ^ static_cast<std::uint64_t>(a));
    return splitmix64(k ^ static_cast<std::uint64_t>(b) * 0x9E3779B97F4A7C15ULL);
}

using CenterFn = std::function<Point3(double)>;

// Lane from a parametric centerline sampled densely, resampled to uniform
// arc length, with boundaries offset by half_width along the left normal.
inline LaneSegment make_lane(int id, const CenterFn& f, double half_width, LineType left, LineType right) {
    Polyline3 dense;
    constexpr int kDense = 200;
    for (int i = 0; i <= kDense; ++i) dense.push_back(f(static_cast<double>(i) / kDense));
    LaneSegment s;
    s.id = id;
    s.centerline = resample_polyline(dense, kNumPoints);
    Polyline3 offset(kNumPoints);
    for (std::size_t i = 0; i < kNumPoints; ++i) {
        const Point3 a = s.centerline[i == 0 ? 0 : i - 1];
        const Point3 b = s.centerline[i + 1 == kNumPoints ? i : i + 1];
        const double dx = b.x - a.x, dy = b.y - a.y;
        const double len = std::hypot(dx, dy);
        offset[i] = len > 0.0 ? Point3{-dy / len * half_width, dx / len * half_width, 0.0} : Point3{};
    }
    auto bnd = from_center_and_offset(s.centerline, offset);
    s.left_boundary = std::move(bnd.left);
    s.right_boundary = std::move(bnd.right);
    s.left_type = left;
    s.right_type = right;
    return s;
}

inline CenterFn line(Point3 a, Point3 b) {
    return [a, b](double t) { return a + t * (b - a); };
}

// Quarter-type arc around `center` from angle a0 to a1.
inline CenterFn arc(Point3 center, double radius, double a0, double a1) {
    return [=](double t) {
        const double a = a0 + t * (a1 - a0);
        return Point3{center.x + radius * std::cos(a), center.y + radius * std::sin(a), 0.0};
    };
}

// Lateral shift from y0 to y1 with a smoothstep profile along x.
inline CenterFn lane_change(double x0, double x1, double y0, double y1) {
    return [=](double t) {
        const double s = t * t * (3.0 - 2.0 * t);
        return Point3{x0 + t * (x1 - x0), y0 + s * (y1 - y0), 0.0};
    };
}

struct Builder {
    std::vector<LaneSegment> segments;
    std::vector<std::pair<int, int>> edges;
    int next_id = 0;

    int add(const CenterFn& f, double half_width, LineType l, LineType r) {
        segments.push_back(make_lane(next_id, f, half_width, l, r));
        return next_id++;
    }
    int add_crossing(const std::vector<Point3>& polygon) {
        segments.push_back(normalize_ped_crossing(polygon, next_id));
        return next_id++;
    }
    void link(int a, int b) { edges.emplace_back(a, b); }
};

inline std::vector<Point3> rectangle(double x0, double x1, double y0, double y1) {
    return {{x0, y0, 0.0}, {x1, y0, 0.0}, {x1, y1, 0.0}, {x0, y1, 0.0}};
}

}  // namespace detail

/// Deterministic synthetic scene for a preset and seed. The seed jitters lane
/// width, split positions and a small rigid motion of the whole layout.
inline Scene generate(const std::string& preset, std::uint64_t seed) {
    using LT = LineType;
    std::mt19937_64 rng(detail::splitmix64(seed ^ detail::fnv1a(preset)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    const double hw = 0.5 * uni(3.2, 3.8);
    const double w = 2.0 * hw;
    detail::Builder b;

    if (preset == "straight") {
        const double s1 = uni(-20.0, -10.0), s2 = uni(10.0, 20.0);
        const std::array<double, 4> xs{-45.0, s1, s2, 45.0};
        const std::array<std::array<LT, 2>, 3> types{{{LT::Dashed, LT::Solid}, {LT::Dashed, LT::Dashed}, {LT::Solid, LT::Dashed}}};
        for (int lane = 0; lane < 3; ++lane) {
            const double y = (lane - 1) * w;
            int prev = -1;
            for (int k = 0; k < 3; ++k) {
                const int id = b.add(detail::line({xs[k], y, 0}, {xs[k + 1], y, 0}), hw, types[lane][0], types[lane][1]);
                if (prev >= 0) b.link(prev, id);
                prev = id;
            }
        }
    } else if (preset == "curve") {
        const double radius = uni(55.0, 70.0);
        const double span = 0.55;
        const std::array<double, 4> as{-span, -span / 3 + uni(-0.05, 0.05), span / 3 + uni(-0.05, 0.05), span};
        for (int lane = 0; lane < 2; ++lane) {
            const double r = radius - lane * w;
            const Point3 center{0.0, radius - 2.0, 0.0};
            int prev = -1;
            for (int k = 0; k < 3; ++k) {
                const double a0 = -std::numbers::pi / 2 + as[k], a1 = -std::numbers::pi / 2 + as[k + 1];
                const int id = b.add(detail::arc(center, r, a0, a1), hw, lane == 0 ? LT::Dashed : LT::Solid,
                                     lane == 0 ? LT::Solid : LT::Dashed);
                if (prev >= 0) b.link(prev, id);
                prev = id;
            }
        }
    } else if (preset == "diverge") {
        const double xs = uni(-10.0, 0.0);
        const int a = b.add(detail::line({-45, 0, 0}, {xs, 0, 0}), hw, LT::Solid, LT::Dashed);
        const int straight = b.add(detail::line({xs, 0, 0}, {42, 0, 0}), hw, LT::Solid, LT::Dashed);
        const int exit = b.add(detail::lane_change(xs, 42, 0, w + 1.0), hw, LT::Solid, LT::Dashed);
        b.link(a, straight);
        b.link(a, exit);
        const int r0 = b.add(detail::line({-45, -w, 0}, {xs, -w, 0}), hw, LT::Dashed, LT::Solid);
        const int r1 = b.add(detail::line({xs, -w, 0}, {42, -w, 0}), hw, LT::Dashed, LT::Solid);
        b.link(r0, r1);
    } else if (preset == "merge") {
        const double xm = uni(0.0, 10.0);
        const int main_in = b.add(detail::line({-42, 0, 0}, {xm, 0, 0}), hw, LT::Solid, LT::Dashed);
        const int ramp = b.add(detail::lane_change(-42, xm, w + 1.0, 0), hw, LT::Solid, LT::Dashed);
        const int out = b.add(detail::line({xm, 0, 0}, {45, 0, 0}), hw, LT::Solid, LT::Dashed);
        b.link(main_in, out);
        b.link(ramp, out);
        const int r0 = b.add(detail::line({-42, -w, 0}, {xm, -w, 0}), hw, LT::Dashed, LT::Solid);
        const int r1 = b.add(detail::line({xm, -w, 0}, {45, -w, 0}), hw, LT::Dashed, LT::Solid);
        b.link(r0, r1);
    } else if (preset == "intersection") {
        const double box = uni(11.0, 13.0);
        const double yl = hw;
        // eastbound approach, connectors and exits
        const int east_in = b.add(detail::line({-45, -yl, 0}, {-box, -yl, 0}), hw, LT::Dashed, LT::Solid);
        const int east_thru = b.add(detail::line({-box, -yl, 0}, {box, -yl, 0}), hw, LT::NonVisible, LT::NonVisible);
        const int east_out = b.add(detail::line({box, -yl, 0}, {45, -yl, 0}), hw, LT::Dashed, LT::Solid);
        const double rl = box + yl;
        const int left_turn = b.add(detail::arc({-box, box, 0}, rl, -std::numbers::pi / 2, 0.0), hw, LT::NonVisible,
                                    LT::NonVisible);
        const int north_out = b.add(detail::line({yl, box, 0}, {yl, 22, 0}), hw, LT::Dashed, LT::Solid);
        const double rr = box - yl;
        const int right_turn = b.add(detail::arc({-box, -box, 0}, rr, std::numbers::pi / 2, 0.0), hw,
                                     LT::NonVisible, LT::NonVisible);
        const int south_out = b.add(detail::line({-yl, -box, 0}, {-yl, -22, 0}), hw, LT::Dashed, LT::Solid);
        b.link(east_in, east_thru);
        b.link(east_thru, east_out);
        b.link(east_in, left_turn);
        b.link(left_turn, north_out);
        b.link(east_in, right_turn);
        b.link(right_turn, south_out);
        // westbound
        const int west_in = b.add(detail::line({45, yl, 0}, {box, yl, 0}), hw, LT::Dashed, LT::Solid);
        const int west_thru = b.add(detail::line({box, yl, 0}, {-box, yl, 0}), hw, LT::NonVisible, LT::NonVisible);
        const int west_out = b.add(detail::line({-box, yl, 0}, {-45, yl, 0}), hw, LT::Dashed, LT::Solid);
        b.link(west_in, west_thru);
        b.link(west_thru, west_out);
        // crossings on both approaches
        b.add_crossing(detail::rectangle(-box - 4.0, -box - 1.0, -2 * hw - 1.0, 2 * hw + 1.0));
        b.add_crossing(detail::rectangle(box + 1.0, box + 4.0, -2 * hw - 1.0, 2 * hw + 1.0));
    } else {
        throw std::invalid_argument("generate: unknown preset '" + preset + "'");
    }

    // small rigid motion of the whole layout
    const double theta = uni(-1.5, 1.5) * std::numbers::pi / 180.0;
    const double tx = uni(-1.5, 1.5), ty = uni(-1.0, 1.0);
    const double c = std::cos(theta), s = std::sin(theta);
    auto move = [&](Point3 p) { return Point3{c * p.x - s * p.y + tx, s * p.x + c * p.y + ty, p.z}; };
    for (auto& seg : b.segments)
        for (auto* line : {&seg.centerline, &seg.left_boundary, &seg.right_boundary})
            for (auto& p : *line) p = move(p);

    Scene scene;
    scene.frame_id = preset + "-" + std::to_string(seed);
    scene.kind = SceneKind::GroundTruth;
    scene.graph = make_graph(std::move(b.segments));
    for (const auto& [from, to] : b.edges)
        scene.graph.adjacency(static_cast<std::size_t>(index_of(scene.graph, from)),
                              static_cast<std::size_t>(index_of(scene.graph, to))) = 1.0;
    return scene;
}

/// n scenes cycling through the presets with seeds base_seed, base_seed+1, ...
inline std::vector<Scene> generate_corpus(std::size_t n, std::uint64_t base_seed) {
    std::vector<Scene> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(generate(kPresets[i % kPresets.size()], base_seed + i));
    return out;
}

struct PerturbSpec {
    double sigma_pos = 0.0;
    double p_drop = 0.0;
    double p_type_flip = 0.0;
    double p_edge_flip = 0.0;
    std::uint64_t seed = 0;
};

/// Turns a ground-truth scene into a scored prediction. Every random draw
/// comes from a stream keyed by (seed, frame id, segment id) or, for edges,
/// (seed, frame id, id pair), so results do not depend on visiting order.
/// Confidence is 1 / (1 + mean point displacement in meters).
inline Scene perturb(const Scene& gt, const PerturbSpec& spec) {
    require(spec.sigma_pos >= 0.0, "perturb: negative sigma");
    for (double p : {spec.p_drop, spec.p_type_flip, spec.p_edge_flip})
        require(p >= 0.0 && p <= 1.0, "perturb: probability outside [0,1]");

    std::vector<LaneSegment> kept;
    std::vector<std::size_t> source;
    for (std::size_t i = 0; i < gt.graph.size(); ++i) {
        const auto& g = gt.graph.segments[i];
        std::mt19937_64 rng(detail::stream_key(spec.seed, gt.frame_id, g.id));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> noise(0.0, 1.0);
        if (unit(rng) < spec.p_drop) continue;

        LaneSegment s = g;
        double displacement = 0.0;
        std::size_t count = 0;
        for (auto* line : {&s.centerline, &s.left_boundary, &s.right_boundary}) {
            for (auto& p : *line) {
                const double dx = spec.sigma_pos * noise(rng);
                const double dy = spec.sigma_pos * noise(rng);
                p.x += dx;
                p.y += dy;
                displacement += std::hypot(dx, dy);
                ++count;
            }
        }
        if (s.lane_class == LaneClass::LaneSegment) {
            for (auto* t : {&s.left_type, &s.right_type}) {
                const double flip = unit(rng);
                const int shift = unit(rng) < 0.5 ? 1 : 2;
                if (flip < spec.p_type_flip) *t = static_cast<LineType>((static_cast<int>(*t) + shift) % 3);
            }
        }
        s.confidence = 1.0 / (1.0 + (count ? displacement / static_cast<double>(count) : 0.0));
        kept.push_back(std::move(s));
        source.push_back(i);
    }

    Scene out;
    out.frame_id = gt.frame_id;
    out.range = gt.range;
    out.kind = SceneKind::Prediction;
    out.graph = make_graph(std::move(kept));
    for (std::size_t a = 0; a < source.size(); ++a) {
        for (std::size_t b = 0; b < source.size(); ++b) {
            if (a == b) continue;
            double v = gt.graph.adjacency(source[a], source[b]);
            if (spec.p_edge_flip > 0.0) {
                std::mt19937_64 rng(detail::stream_key(spec.seed ^ 0x5bd1e995ULL, gt.frame_id,
                                                       out.graph.segments[a].id, out.graph.segments[b].id));
                if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < spec.p_edge_flip) v = 1.0 - v;
            }
            out.graph.adjacency(a, b) = v;
        }
    }
    return out;
}

/// Exact copy marked as a prediction with confidence 1.
inline Scene as_prediction(const Scene& gt) {
    Scene s = gt;
    s.kind = SceneKind::Prediction;
    for (auto& seg : s.graph.segments) seg.confidence = 1.0;
    return s;
}

}  // namespace laneseg
