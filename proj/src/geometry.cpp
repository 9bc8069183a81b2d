#include "navlab/geometry.hpp"

#include <algorithm>

namespace navlab {

std::optional<double> ray_rect_entry(const Vec2& origin, const Vec2& dir, const Rect& r) {
    // Slab method. Track the interval [t_near, t_far] of overlap.
    double t_near = 0.0;
    double t_far = std::numeric_limits<double>::infinity();
    const double lo[2] = {r.x, r.y};
    const double hi[2] = {r.x1(), r.y1()};
    const double o[2] = {origin.x, origin.y};
    const double d[2] = {dir.x, dir.y};
    for (int axis = 0; axis < 2; ++axis) {
        if (std::abs(d[axis]) < 1e-15) {
            if (o[axis] < lo[axis] || o[axis] > hi[axis]) return std::nullopt;
            continue;
        }
        double t0 = (lo[axis] - o[axis]) / d[axis];
        double t1 = (hi[axis] - o[axis]) / d[axis];
        if (t0 > t1) std::swap(t0, t1);
        t_near = std::max(t_near, t0);
        t_far = std::min(t_far, t1);
        if (t_near > t_far) return std::nullopt;
    }
    return t_near;
}

std::optional<double> ray_rect_exit(const Vec2& origin, const Vec2& dir, const Rect& r) {
    if (!r.contains(origin)) return std::nullopt;
    double t_far = std::numeric_limits<double>::infinity();
    const double lo[2] = {r.x, r.y};
    const double hi[2] = {r.x1(), r.y1()};
    const double o[2] = {origin.x, origin.y};
    const double d[2] = {dir.x, dir.y};
    for (int axis = 0; axis < 2; ++axis) {
        if (std::abs(d[axis]) < 1e-15) continue;
        const double t0 = (lo[axis] - o[axis]) / d[axis];
        const double t1 = (hi[axis] - o[axis]) / d[axis];
        t_far = std::min(t_far, std::max(t0, t1));
    }
    return t_far;
}

std::optional<double> ray_circle(const Vec2& origin, const Vec2& dir, const Vec2& center,
                                 double radius) {
    const Vec2 oc = origin - center;
    const double a = dir.dot(dir);
    const double b = 2.0 * oc.dot(dir);
    const double c = oc.dot(oc) - radius * radius;
    const double disc = b * b - 4 * a * c;
    if (disc < 0) return std::nullopt;
    const double sq = std::sqrt(disc);
    const double t0 = (-b - sq) / (2 * a);
    const double t1 = (-b + sq) / (2 * a);
    if (t0 >= 0) return t0;
    if (t1 >= 0) return t1;  // origin inside the disk
    return std::nullopt;
}

bool segment_intersects_rect(const Vec2& a, const Vec2& b, const Rect& r) {
    if (r.contains(a) || r.contains(b)) return true;
    const Vec2 d = b - a;
    const auto entry = ray_rect_entry(a, d, r);
    return entry.has_value() && *entry <= 1.0;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b, double* t_out) {
    const Vec2 ab = b - a;
    const double len2 = ab.norm2();
    double t = 0.0;
    if (len2 > 0) t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    if (t_out) *t_out = t;
    return distance(p, a + ab * t);
}

double polyline_length(const std::vector<Vec2>& pts) {
    double s = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) s += distance(pts[i - 1], pts[i]);
    return s;
}

Vec2 polyline_point_at(const std::vector<Vec2>& pts, double s) {
    if (pts.empty()) return {};
    if (s <= 0.0) return pts.front();
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double seg = distance(pts[i - 1], pts[i]);
        if (s <= seg) {
            if (seg == 0.0) return pts[i];
            const double t = s / seg;
            return pts[i - 1] + (pts[i] - pts[i - 1]) * t;
        }
        s -= seg;
    }
    return pts.back();
}

PolylineProjection project_to_polyline(const std::vector<Vec2>& pts, const Vec2& p) {
    PolylineProjection best;
    best.distance = std::numeric_limits<double>::infinity();
    if (pts.empty()) return best;
    if (pts.size() == 1) return {0.0, distance(pts[0], p), pts[0]};
    double arc = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        double t = 0.0;
        const double d = point_segment_distance(p, pts[i - 1], pts[i], &t);
        const double seg = distance(pts[i - 1], pts[i]);
        if (d < best.distance - 1e-12) {
            best.distance = d;
            best.arc = arc + t * seg;
            best.point = pts[i - 1] + (pts[i] - pts[i - 1]) * t;
        }
        arc += seg;
    }
    return best;
}

}  // namespace navlab
