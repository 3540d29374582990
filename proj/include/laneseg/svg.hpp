#pragma once

#include <cstdio>
#include <string>

#include "core.hpp"
#include "io.hpp"

namespace laneseg {

struct SvgStyle {
    double pixels_per_meter = 10.0;
    double margin = 20.0;
};

namespace detail {

inline std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct SvgCanvas {
    BevRange range;
    SvgStyle style;

    // x grows to the right, y grows upward on screen
    double px(const Point3& p) const { return style.margin + (p.x - range.x_min) * style.pixels_per_meter; }
    double py(const Point3& p) const { return style.margin + (range.y_max - p.y) * style.pixels_per_meter; }
    double width() const { return 2 * style.margin + range.x_extent() * style.pixels_per_meter; }
    double height() const { return 2 * style.margin + range.y_extent() * style.pixels_per_meter; }

    std::string points(const Polyline3& line) const {
        std::string s;
        for (const auto& p : line) {
            if (!s.empty()) s += ' ';
            s += fmt2(px(p)) + "," + fmt2(py(p));
        }
        return s;
    }
};

inline std::string boundary_style(LineType t) {
    switch (t) {
        case LineType::Solid: return R"(stroke="#222222" stroke-width="2")";
        case LineType::Dashed: return R"(stroke="#222222" stroke-width="2" stroke-dasharray="8 6")";
        case LineType::NonVisible:
            return R"(stroke="#888888" stroke-width="1.5" stroke-dasharray="1.5 4" stroke-linecap="round")";
    }
    return "";
}

}  // namespace detail

/// Top-down drawing: one group per segment holding both boundaries (styled
/// by line type) and the centerline with an arrowhead; crossings also get a
/// filled outline. Successor edges connect centerline end to start.
inline std::string render_svg(const Scene& scene, const SvgStyle& style = {}) {
    const detail::SvgCanvas cv{scene.range, style};
    std::string s;
    s += R"(<?xml version="1.0" encoding="UTF-8"?>)" "\n";
    s += R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" + detail::fmt2(cv.width()) + R"(" height=")" +
         detail::fmt2(cv.height()) + R"(" viewBox="0 0 )" + detail::fmt2(cv.width()) + " " +
         detail::fmt2(cv.height()) + "\">\n";
    s += "  <title>" + detail::xml_escape(scene.frame_id) + "</title>\n";
    s += R"(  <defs>
    <marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="6" markerHeight="6" orient="auto-start-reverse">
      <path d="M 0 0 L 10 5 L 0 10 z" fill="#1f5fbf"/>
    </marker>
    <marker id="edge-arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="5" markerHeight="5" orient="auto-start-reverse">
      <path d="M 0 0 L 10 5 L 0 10 z" fill="#2a9d3a"/>
    </marker>
  </defs>
)";
    s += R"(  <rect x="0" y="0" width=")" + detail::fmt2(cv.width()) + R"(" height=")" + detail::fmt2(cv.height()) +
         R"(" fill="#ffffff"/>)" "\n";

    const auto& g = scene.graph;
    for (const auto& seg : g.segments) {
        const bool crossing = seg.lane_class == LaneClass::PedCrossing;
        s += "  <g class=\"" + std::string(to_string(seg.lane_class)) + "\" data-id=\"" + std::to_string(seg.id) +
             "\" data-confidence=\"" + detail::format_fixed(seg.confidence) + "\">\n";
        if (crossing) {
            Polyline3 ring = seg.left_boundary;
            ring.insert(ring.end(), seg.right_boundary.rbegin(), seg.right_boundary.rend());
            s += "    <polygon class=\"crossing-area\" points=\"" + cv.points(ring) +
                 R"(" fill="#f4a261" fill-opacity="0.35" stroke="none"/>)" "\n";
        }
        s += "    <polyline class=\"left-boundary\" points=\"" + cv.points(seg.left_boundary) + "\" fill=\"none\" " +
             detail::boundary_style(seg.left_type) + "/>\n";
        s += "    <polyline class=\"right-boundary\" points=\"" + cv.points(seg.right_boundary) + "\" fill=\"none\" " +
             detail::boundary_style(seg.right_type) + "/>\n";
        s += "    <polyline class=\"centerline\" points=\"" + cv.points(seg.centerline) +
             R"svg(" fill="none" stroke="#1f5fbf" stroke-width="1.2" marker-end="url(#arrow)"/>)svg" "\n";
        s += "  </g>\n";
    }

    if (g.adjacency.rows == g.size() && g.adjacency.cols == g.size()) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            for (std::size_t j = 0; j < g.size(); ++j) {
                const double w = g.adjacency(i, j);
                if (i == j || w <= 0.0) continue;
                const auto& a = g.segments[i].centerline;
                const auto& b = g.segments[j].centerline;
                if (a.empty() || b.empty()) continue;
                s += "  <line class=\"successor\" data-from=\"" + std::to_string(g.segments[i].id) + "\" data-to=\"" +
                     std::to_string(g.segments[j].id) + "\" x1=\"" + detail::fmt2(cv.px(a.back())) + "\" y1=\"" +
                     detail::fmt2(cv.py(a.back())) + "\" x2=\"" + detail::fmt2(cv.px(b.front())) + "\" y2=\"" +
                     detail::fmt2(cv.py(b.front())) + R"(" stroke="#2a9d3a" stroke-width="1" stroke-opacity=")" +
                     detail::fmt2(std::clamp(w, 0.0, 1.0)) + R"svg(" marker-end="url(#edge-arrow)"/>)svg" "\n";
            }
        }
    }
    s += "</svg>\n";
    return s;
}

inline void save_svg(const std::string& path, const Scene& scene, const SvgStyle& style = {}) {
    write_text_file(path, render_svg(scene, style));
}

}  // namespace laneseg
