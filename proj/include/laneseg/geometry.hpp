#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "core.hpp"

namespace laneseg {

/// Cell lattice over a BEV rectangle. Rows (H) run along x, columns (W)
/// along y; cell (h, w) covers [x_min + h*dx, x_min + (h+1)*dx) x [...].
struct GridSpec {
    std::size_t H = 200;
    std::size_t W = 100;
    BevRange range;

    double cell_x() const { return range.x_extent() / static_cast<double>(H); }
    double cell_y() const { return range.y_extent() / static_cast<double>(W); }
    Point2 cell_center(std::size_t h, std::size_t w) const {
        return {range.x_min + (static_cast<double>(h) + 0.5) * cell_x(),
                range.y_min + (static_cast<double>(w) + 0.5) * cell_y()};
    }
    bool valid() const { return H >= 1 && W >= 1 && range.x_max > range.x_min && range.y_max > range.y_min; }

    /// Metric (x, y) to normalized [0,1]^2 over the range.
    Point2 normalize(Point3 p) const {
        return {(p.x - range.x_min) / range.x_extent(), (p.y - range.y_min) / range.y_extent()};
    }
    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct BinaryMask {
    std::size_t H = 0;
    std::size_t W = 0;
    std::vector<std::uint8_t> cells;

    BinaryMask() = default;
    BinaryMask(std::size_t h, std::size_t w) : H(h), W(w), cells(h * w, 0) {}
    std::uint8_t& at(std::size_t h, std::size_t w) { return cells[h * W + w]; }
    std::uint8_t at(std::size_t h, std::size_t w) const { return cells[h * W + w]; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto c : cells) n += c;
        return n;
    }
};

/// Total arc length.
inline double polyline_length(std::span<const Point3> poly) {
    double len = 0.0;
    for (std::size_t i = 1; i < poly.size(); ++i) len += distance(poly[i - 1], poly[i]);
    return len;
}

/// Point at arc-length fraction t in [0,1]. A zero-length line yields its
/// first point.
inline Point3 point_at_fraction(std::span<const Point3> poly, double t) {
    require(!poly.empty(), "point_at_fraction: empty polyline");
    const double total = polyline_length(poly);
    if (poly.size() == 1 || total <= 0.0) return poly.front();
    const double target = std::clamp(t, 0.0, 1.0) * total;
    double acc = 0.0;
    for (std::size_t i = 1; i < poly.size(); ++i) {
        const double seg = distance(poly[i - 1], poly[i]);
        if (acc + seg >= target && seg > 0.0) {
            const double u = (target - acc) / seg;
            return poly[i - 1] + u * (poly[i] - poly[i - 1]);
        }
        acc += seg;
    }
    return poly.back();
}

/// n points at uniform arc-length spacing. Endpoints are copied verbatim.
inline Polyline3 resample_polyline(std::span<const Point3> poly, std::size_t n) {
    require(poly.size() >= 2, "resample_polyline: need at least 2 points");
    require(n >= 2, "resample_polyline: need n >= 2");
    const double total = polyline_length(poly);
    if (total <= 0.0) return Polyline3(n, poly.front());

    std::vector<double> cum(poly.size(), 0.0);
    for (std::size_t i = 1; i < poly.size(); ++i) cum[i] = cum[i - 1] + distance(poly[i - 1], poly[i]);

    Polyline3 out;
    out.reserve(n);
    out.push_back(poly.front());
    std::size_t seg = 1;
    for (std::size_t k = 1; k + 1 < n; ++k) {
        const double target = total * static_cast<double>(k) / static_cast<double>(n - 1);
        while (seg + 1 < poly.size() && cum[seg] < target) ++seg;
        const double len = cum[seg] - cum[seg - 1];
        const double u = len > 0.0 ? (target - cum[seg - 1]) / len : 0.0;
        out.push_back(poly[seg - 1] + u * (poly[seg] - poly[seg - 1]));
    }
    out.push_back(poly.back());
    return out;
}

/// Symmetric mean nearest-neighbour distance between two point sets (3D).
inline double chamfer(std::span<const Point3> a, std::span<const Point3> b) {
    require(!a.empty() && !b.empty(), "chamfer: empty point set");
    auto directed = [](std::span<const Point3> from, std::span<const Point3> to) {
        double sum = 0.0;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) best = std::min(best, distance(p, q));
            sum += best;
        }
        return sum / static_cast<double>(from.size());
    };
    return 0.5 * (directed(a, b) + directed(b, a));
}

/// Discrete Fréchet distance: minimum over monotone couplings (both indices
/// non-decreasing, endpoints paired) of the largest paired distance.
inline double frechet_discrete(std::span<const Point3> p, std::span<const Point3> q) {
    require(!p.empty() && !q.empty(), "frechet_discrete: empty polyline");
    const std::size_t n = p.size();
    const std::size_t m = q.size();
    std::vector<double> ca(n * m);
    auto at = [&](std::size_t i, std::size_t j) -> double& { return ca[i * m + j]; };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double d = distance(p[i], q[j]);
            if (i == 0 && j == 0) {
                at(i, j) = d;
            } else if (i == 0) {
                at(i, j) = std::max(at(0, j - 1), d);
            } else if (j == 0) {
                at(i, j) = std::max(at(i - 1, 0), d);
            } else {
                at(i, j) = std::max(std::min({at(i - 1, j), at(i - 1, j - 1), at(i, j - 1)}), d);
            }
        }
    }
    return at(n - 1, m - 1);
}

namespace detail {

inline bool on_segment(Point2 p, Point2 a, Point2 b) {
    constexpr double kEps = 1e-12;
    const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (std::abs(cross) > kEps * std::max(1.0, len)) return false;
    return p.x >= std::min(a.x, b.x) - kEps && p.x <= std::max(a.x, b.x) + kEps && p.y >= std::min(a.y, b.y) - kEps &&
           p.y <= std::max(a.y, b.y) + kEps;
}

inline std::size_t distinct_vertices(const Polygon2& poly) {
    std::vector<Point2> uniq;
    for (const auto& v : poly)
        if (std::find(uniq.begin(), uniq.end(), v) == uniq.end()) uniq.push_back(v);
    return uniq.size();
}

}  // namespace detail

/// Even-odd point-in-polygon; points on an edge count as inside.
inline bool point_in_polygon(Point2 p, const Polygon2& poly) {
    const std::size_t n = poly.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i)
        if (detail::on_segment(p, poly[i], poly[(i + 1) % n])) return true;
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const auto& a = poly[i];
        const auto& b = poly[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < x_cross) inside = !inside;
        }
    }
    return inside;
}

/// Cell is set iff its center lies inside the polygon.
inline BinaryMask rasterize_polygon(const Polygon2& poly, const GridSpec& grid) {
    require(grid.valid(), "rasterize_polygon: invalid grid");
    BinaryMask mask(grid.H, grid.W);
    if (detail::distinct_vertices(poly) < 3) return mask;

    double x_lo = poly[0].x, x_hi = poly[0].x, y_lo = poly[0].y, y_hi = poly[0].y;
    for (const auto& v : poly) {
        x_lo = std::min(x_lo, v.x);
        x_hi = std::max(x_hi, v.x);
        y_lo = std::min(y_lo, v.y);
        y_hi = std::max(y_hi, v.y);
    }
    for (std::size_t h = 0; h < grid.H; ++h) {
        for (std::size_t w = 0; w < grid.W; ++w) {
            const Point2 c = grid.cell_center(h, w);
            if (c.x < x_lo || c.x > x_hi || c.y < y_lo || c.y > y_hi) continue;
            if (point_in_polygon(c, poly)) mask.at(h, w) = 1;
        }
    }
    return mask;
}

/// Dominant direction of the vertex cloud (largest-eigenvalue eigenvector of
/// the 2x2 covariance), returned with x >= 0 (y > 0 when x == 0). An
/// isotropic cloud yields (1, 0).
inline Point2 principal_axis(std::span<const Point2> vertices) {
    require(vertices.size() >= 3, "principal_axis: need at least 3 vertices");
    double mx = 0.0, my = 0.0;
    for (const auto& v : vertices) {
        mx += v.x;
        my += v.y;
    }
    const double n = static_cast<double>(vertices.size());
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (const auto& v : vertices) {
        const double dx = v.x - mx, dy = v.y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    sxx /= n;
    syy /= n;
    sxy /= n;

    const double half_diff = 0.5 * (sxx - syy);
    const double disc = std::sqrt(half_diff * half_diff + sxy * sxy);
    // lambda_max - lambda_min = 2 * disc
    if (2.0 * disc <= 1e-9 * std::max(1.0, 0.5 * (sxx + syy) + disc)) return {1.0, 0.0};

    // Eigenvector of the larger eigenvalue, at angle 0.5 * atan2(2 sxy, sxx - syy).
    const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
    Point2 d{std::cos(theta), std::sin(theta)};
    if (d.x < 0.0 || (d.x == 0.0 && d.y < 0.0)) d = {-d.x, -d.y};
    return d;
}

inline Point2 principal_axis(const Polygon2& poly) { return principal_axis(std::span<const Point2>(poly)); }

}  // namespace laneseg
