#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "geometry.hpp"

namespace laneseg {

/// Raw map piece before merging.
struct LanePiece {
    LaneSegment segment;
    bool in_intersection = false;
    std::vector<int> successors;

    friend bool operator==(const LanePiece&, const LanePiece&) = default;
};

namespace detail {

inline void append_line(Polyline3& dst, const Polyline3& src) {
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (i == 0 && !dst.empty() && distance(dst.back(), src[0]) < 1e-9) continue;
        dst.push_back(src[i]);
    }
}

}  // namespace detail

/// Concatenates maximal chains of pieces joined by a single link (out-degree 1
/// into in-degree 1) whose boundary types and intersection flag agree across
/// the junction. Merging stops at diverges, merges, intersection borders and
/// line-type changes. Merged lines are resampled to kNumPoints; a lone piece
/// that already has kNumPoints points passes through untouched.
inline std::vector<LanePiece> dfs_merge_pieces(const std::vector<LanePiece>& pieces) {
    const std::size_t n = pieces.size();
    std::map<int, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) {
        if (!index.emplace(pieces[i].segment.id, i).second)
            throw std::invalid_argument("dfs_merge: duplicate piece id " + std::to_string(pieces[i].segment.id));
    }
    std::vector<std::vector<std::size_t>> succ(n);
    std::vector<std::size_t> in_degree(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (int sid : pieces[i].successors) {
            auto it = index.find(sid);
            if (it == index.end())
                throw std::invalid_argument("dfs_merge: piece " + std::to_string(pieces[i].segment.id) +
                                            " has unknown successor " + std::to_string(sid));
            if (std::find(succ[i].begin(), succ[i].end(), it->second) != succ[i].end()) continue;
            succ[i].push_back(it->second);
            ++in_degree[it->second];
        }
    }

    auto mergeable = [&](std::size_t u, std::size_t v) {
        const auto& a = pieces[u];
        const auto& b = pieces[v];
        return u != v && succ[u].size() == 1 && in_degree[v] == 1 && a.segment.lane_class == LaneClass::LaneSegment &&
               b.segment.lane_class == LaneClass::LaneSegment && a.segment.left_type == b.segment.left_type &&
               a.segment.right_type == b.segment.right_type && a.in_intersection == b.in_intersection;
    };

    std::vector<std::ptrdiff_t> next(n, -1);
    std::vector<char> has_prev(n, 0);
    for (std::size_t u = 0; u < n; ++u) {
        if (succ[u].size() == 1 && mergeable(u, succ[u][0])) {
            next[u] = static_cast<std::ptrdiff_t>(succ[u][0]);
            has_prev[succ[u][0]] = 1;
        }
    }

    std::vector<std::vector<std::size_t>> chains;
    std::vector<std::size_t> chain_of(n, 0);
    std::vector<char> visited(n, 0);
    for (std::size_t s = 0; s < n; ++s) {
        if (has_prev[s]) continue;
        std::vector<std::size_t> chain;
        for (std::ptrdiff_t cur = static_cast<std::ptrdiff_t>(s); cur >= 0; cur = next[static_cast<std::size_t>(cur)]) {
            const auto c = static_cast<std::size_t>(cur);
            visited[c] = 1;
            chain_of[c] = chains.size();
            chain.push_back(c);
        }
        chains.push_back(std::move(chain));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (visited[i]) continue;
        std::string ids;
        std::size_t cur = i;
        do {
            ids += (ids.empty() ? "" : " -> ") + std::to_string(pieces[cur].segment.id);
            cur = static_cast<std::size_t>(next[cur]);
        } while (cur != i);
        throw std::invalid_argument("dfs_merge: cyclic merge chain " + ids + " -> " +
                                    std::to_string(pieces[i].segment.id));
    }

    std::vector<LanePiece> out;
    out.reserve(chains.size());
    for (const auto& chain : chains) {
        const auto& head = pieces[chain.front()];
        const auto& tail = pieces[chain.back()];
        LanePiece merged;
        merged.segment = head.segment;
        merged.in_intersection = head.in_intersection;
        if (chain.size() > 1 || head.segment.centerline.size() != kNumPoints) {
            Polyline3 c, l, r;
            for (std::size_t idx : chain) {
                detail::append_line(c, pieces[idx].segment.centerline);
                detail::append_line(l, pieces[idx].segment.left_boundary);
                detail::append_line(r, pieces[idx].segment.right_boundary);
            }
            merged.segment.centerline = resample_polyline(c, kNumPoints);
            merged.segment.left_boundary = resample_polyline(l, kNumPoints);
            merged.segment.right_boundary = resample_polyline(r, kNumPoints);
        }
        for (int sid : tail.successors) {
            const int target = pieces[chains[chain_of[index.at(sid)]].front()].segment.id;
            if (std::find(merged.successors.begin(), merged.successors.end(), target) == merged.successors.end())
                merged.successors.push_back(target);
        }
        out.push_back(std::move(merged));
    }
    return out;
}

inline LaneGraph pieces_to_graph(const std::vector<LanePiece>& pieces) {
    std::vector<LaneSegment> segs;
    segs.reserve(pieces.size());
    for (const auto& p : pieces) segs.push_back(p.segment);
    LaneGraph g = make_graph(std::move(segs));
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        for (int sid : pieces[i].successors) {
            const auto j = index_of(g, sid);
            require(j >= 0, "pieces_to_graph: unknown successor id");
            g.adjacency(i, static_cast<std::size_t>(j)) = 1.0;
        }
    }
    return g;
}

/// Inverse of pieces_to_graph. The intersection flag is not stored in a lane
/// graph; a segment with both boundaries non-visible is taken as lying in an
/// intersection.
inline std::vector<LanePiece> pieces_from_graph(const LaneGraph& g) {
    std::vector<LanePiece> out;
    out.reserve(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        LanePiece p;
        p.segment = g.segments[i];
        p.in_intersection =
            p.segment.left_type == LineType::NonVisible && p.segment.right_type == LineType::NonVisible;
        for (std::size_t j = 0; j < g.size(); ++j)
            if (g.adjacency(i, j) > 0.5) p.successors.push_back(g.segments[j].id);
        out.push_back(std::move(p));
    }
    return out;
}

inline LaneGraph dfs_merge(const std::vector<LanePiece>& pieces) { return pieces_to_graph(dfs_merge_pieces(pieces)); }

/// Canonical crossing direction: the axis is flipped to point towards the
/// upper-left half-plane, d . (1, 1) >= 0, with an exact tie resolved to
/// positive y.
inline Point2 orient_top_left(Point2 d) {
    const double s = d.x + d.y;
    if (s < 0.0 || (s == 0.0 && d.y < 0.0)) return {-d.x, -d.y};
    return d;
}

/// Converts a crossing polygon into a two-edge lane segment. The boundary is
/// cut where it crosses the principal axis through the centroid; both halves
/// are directed along the canonical axis and resampled, and the one on the
/// +90 degree side becomes the left boundary.
inline LaneSegment normalize_ped_crossing(const std::vector<Point3>& polygon, int id = 0) {
    const std::size_t n = polygon.size();
    require(n >= 4, "normalize_ped_crossing: need at least 4 vertices");

    double area2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = polygon[i];
        const auto& b = polygon[(i + 1) % n];
        area2 += a.x * b.y - b.x * a.y;
    }
    require(std::abs(area2) > 1e-9, "normalize_ped_crossing: degenerate polygon");

    Polygon2 flat;
    flat.reserve(n);
    double cx = 0.0, cy = 0.0;
    for (const auto& p : polygon) {
        flat.push_back({p.x, p.y});
        cx += p.x;
        cy += p.y;
    }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    const Point2 d = orient_top_left(principal_axis(flat));
    const Point2 normal{-d.y, d.x};

    auto side = [&](std::size_t i) { return (flat[i].x - cx) * normal.x + (flat[i].y - cy) * normal.y >= 0.0; };
    std::vector<std::size_t> cuts;  // edge i runs from vertex i to i+1
    for (std::size_t i = 0; i < n; ++i)
        if (side(i) != side((i + 1) % n)) cuts.push_back(i);
    require(cuts.size() == 2, "normalize_ped_crossing: polygon must cross its principal axis exactly twice");

    auto collect = [&](std::size_t from_edge, std::size_t to_edge) {
        std::vector<Point3> chain;
        for (std::size_t i = (from_edge + 1) % n;; i = (i + 1) % n) {
            chain.push_back(polygon[i]);
            if (i == to_edge) break;
        }
        return chain;
    };
    std::vector<Point3> a = collect(cuts[0], cuts[1]);
    std::vector<Point3> b = collect(cuts[1], cuts[0]);
    require(a.size() >= 2 && b.size() >= 2, "normalize_ped_crossing: degenerate polygon side");

    auto along = [&](Point3 p) { return p.x * d.x + p.y * d.y; };
    auto across = [&](const std::vector<Point3>& c) {
        double s = 0.0;
        for (const auto& p : c) s += p.x * normal.x + p.y * normal.y;
        return s / static_cast<double>(c.size());
    };
    for (auto* chain : {&a, &b})
        if (along(chain->back()) < along(chain->front())) std::reverse(chain->begin(), chain->end());
    if (across(a) < across(b)) std::swap(a, b);

    LaneSegment seg;
    seg.id = id;
    seg.lane_class = LaneClass::PedCrossing;
    seg.left_type = LineType::NonVisible;
    seg.right_type = LineType::NonVisible;
    seg.left_boundary = resample_polyline(a, kNumPoints);
    seg.right_boundary = resample_polyline(b, kNumPoints);
    seg.centerline.resize(kNumPoints);
    for (std::size_t i = 0; i < kNumPoints; ++i)
        seg.centerline[i] = 0.5 * (seg.left_boundary[i] + seg.right_boundary[i]);
    return seg;
}

/// Closed boundary ring of a segment: left boundary then reversed right.
inline std::vector<Point3> ring_of(const LaneSegment& seg) {
    std::vector<Point3> ring(seg.left_boundary.begin(), seg.left_boundary.end());
    ring.insert(ring.end(), seg.right_boundary.rbegin(), seg.right_boundary.rend());
    return ring;
}

enum class MapElementClass { Divider, PedCrossing };

/// Map-element view of a lane graph. Dividers hold one polyline; crossings
/// hold both edges.
struct MapElement {
    int id = 0;
    MapElementClass element_class = MapElementClass::Divider;
    LineType line_type = LineType::NonVisible;
    double confidence = 1.0;
    Polyline3 polyline;
    Polyline3 second_edge;  // crossings only

    /// Point set used for Chamfer matching.
    std::vector<Point3> points() const {
        std::vector<Point3> pts(polyline.begin(), polyline.end());
        pts.insert(pts.end(), second_edge.begin(), second_edge.end());
        return pts;
    }
};

/// Mean point-wise distance between two equal-length lines, taking the better
/// of the two relative directions.
inline double mean_line_distance(const Polyline3& a, const Polyline3& b) {
    require(a.size() == b.size() && !a.empty(), "mean_line_distance: length mismatch");
    double fwd = 0.0, rev = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        fwd += distance(a[i], b[i]);
        rev += distance(a[i], b[b.size() - 1 - i]);
    }
    return std::min(fwd, rev) / static_cast<double>(a.size());
}

inline constexpr double kDividerDedupTolerance = 0.1;

/// Visible boundaries become dividers (duplicates within 0.1 m mean distance
/// are emitted once, keeping the higher confidence); crossings pass through
/// with both edges.
inline std::vector<MapElement> decompose_to_map_elements(const LaneGraph& graph) {
    std::vector<MapElement> out;
    int next_id = 0;
    for (const auto& seg : graph.segments) {
        if (seg.lane_class == LaneClass::PedCrossing) {
            MapElement e;
            e.id = next_id++;
            e.element_class = MapElementClass::PedCrossing;
            e.confidence = seg.confidence;
            e.polyline = seg.left_boundary;
            e.second_edge = seg.right_boundary;
            out.push_back(std::move(e));
            continue;
        }
        for (int side = 0; side < 2; ++side) {
            const LineType type = side == 0 ? seg.left_type : seg.right_type;
            const Polyline3& line = side == 0 ? seg.left_boundary : seg.right_boundary;
            if (type == LineType::NonVisible) continue;
            bool duplicate = false;
            for (auto& existing : out) {
                if (existing.element_class != MapElementClass::Divider || existing.polyline.size() != line.size())
                    continue;
                if (mean_line_distance(existing.polyline, line) <= kDividerDedupTolerance) {
                    existing.confidence = std::max(existing.confidence, seg.confidence);
                    duplicate = true;
                    break;
                }
            }
            if (duplicate) continue;
            MapElement e;
            e.id = next_id++;
            e.element_class = MapElementClass::Divider;
            e.line_type = type;
            e.confidence = seg.confidence;
            e.polyline = line;
            out.push_back(std::move(e));
        }
    }
    return out;
}

/// Encodes map elements as lane segments so they share the scene file format:
/// a divider becomes a lane_segment whose three lines coincide, a crossing
/// keeps its two edges. Adjacency is empty.
inline Scene map_elements_to_scene(const std::vector<MapElement>& elements, const Scene& like) {
    std::vector<LaneSegment> segs;
    for (const auto& e : elements) {
        LaneSegment s;
        s.id = e.id;
        s.confidence = e.confidence;
        if (e.element_class == MapElementClass::Divider) {
            s.lane_class = LaneClass::LaneSegment;
            s.centerline = s.left_boundary = s.right_boundary = e.polyline;
            s.left_type = s.right_type = e.line_type;
        } else {
            s.lane_class = LaneClass::PedCrossing;
            s.left_boundary = e.polyline;
            s.right_boundary = e.second_edge;
            s.centerline.resize(e.polyline.size());
            for (std::size_t i = 0; i < e.polyline.size(); ++i)
                s.centerline[i] = 0.5 * (e.polyline[i] + e.second_edge[i]);
        }
        segs.push_back(std::move(s));
    }
    Scene out;
    out.frame_id = like.frame_id;
    out.range = like.range;
    out.kind = like.kind;
    out.graph = make_graph(std::move(segs));
    return out;
}

/// Reads a decomposed scene back into map elements.
inline std::vector<MapElement> map_elements_from_scene(const Scene& scene) {
    std::vector<MapElement> out;
    for (const auto& s : scene.graph.segments) {
        MapElement e;
        e.id = s.id;
        e.confidence = s.confidence;
        if (s.lane_class == LaneClass::LaneSegment) {
            e.element_class = MapElementClass::Divider;
            e.line_type = s.left_type;
            e.polyline = s.centerline;
        } else {
            e.element_class = MapElementClass::PedCrossing;
            e.polyline = s.left_boundary;
            e.second_edge = s.right_boundary;
        }
        out.push_back(std::move(e));
    }
    return out;
}

/// Keeps lane segments only, collapsing both boundaries onto the centerline;
/// the adjacency sub-matrix over the kept segments is preserved.
inline LaneGraph extract_centerlines(const LaneGraph& graph) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < graph.size(); ++i)
        if (graph.segments[i].lane_class == LaneClass::LaneSegment) keep.push_back(i);
    LaneGraph out;
    out.adjacency = Matrix(keep.size(), keep.size());
    for (std::size_t a = 0; a < keep.size(); ++a) {
        LaneSegment s = graph.segments[keep[a]];
        s.left_boundary = s.centerline;
        s.right_boundary = s.centerline;
        out.segments.push_back(std::move(s));
        for (std::size_t b = 0; b < keep.size(); ++b) out.adjacency(a, b) = graph.adjacency(keep[a], keep[b]);
    }
    return out;
}

}  // namespace laneseg
