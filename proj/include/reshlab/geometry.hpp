#pragma once

// Plane geometry helpers shared by the measure and mesh layers: rectangles,
// segments, convex polygon utilities.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "reshlab/tensor.hpp"

namespace reshlab {

struct Rect {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
    double diameter() const { return std::hypot(width(), height()); }
    bool contains(Vec2 p) const {
        return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;
    }
};

// Signed area of a polygon (positive when counter-clockwise).
inline double polygon_signed_area(const std::vector<Vec2>& poly) {
    double s = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = poly[i];
        const Vec2 b = poly[(i + 1) % n];
        s += cross(a, b);
    }
    return 0.5 * s;
}

inline double triangle_area(Vec2 a, Vec2 b, Vec2 c) {
    return 0.5 * std::abs(cross(b - a, c - a));
}

// Distance from a point to a segment [a, b].
inline double distance_to_segment(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 d = b - a;
    const double len2 = dot(d, d);
    if (len2 == 0.0) return norm(p - a);
    const double t = std::clamp(dot(p - a, d) / len2, 0.0, 1.0);
    return norm(p - (a + t * d));
}

// Outward unit normal of a CCW polygon edge a -> b (points to the right of
// the direction of travel).
inline Vec2 outward_normal_ccw(Vec2 a, Vec2 b) {
    const Vec2 d = b - a;
    const double len = norm(d);
    if (len == 0.0) throw std::invalid_argument("degenerate polygon edge");
    return {d.y / len, -d.x / len};
}

inline Vec2 barycenter(Vec2 a, Vec2 b, Vec2 c) {
    return {(a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0};
}

}  // namespace reshlab
