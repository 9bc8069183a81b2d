#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

namespace navlab {

inline constexpr double kPi = std::numbers::pi;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
    double norm2() const { return x * x + y * y; }
};

inline double distance(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

// Axis-aligned rectangle given by its min corner and size.
struct Rect {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double x1() const { return x + w; }
    double y1() const { return y + h; }

    bool contains(const Vec2& p) const {
        return p.x >= x && p.x <= x1() && p.y >= y && p.y <= y1();
    }
    // Strict interior test (points exactly on a face count as outside).
    bool contains_strict(const Vec2& p) const {
        return p.x > x && p.x < x1() && p.y > y && p.y < y1();
    }
    Rect expanded(double m) const { return {x - m, y - m, w + 2 * m, h + 2 * m}; }
};

// Wrap an angle to [-pi, pi).
inline double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a < 0) a += 2.0 * kPi;
    return a - kPi;
}

// Normalize a heading to [0, 2*pi).
inline double normalize_heading(double a) {
    a = std::fmod(a, 2.0 * kPi);
    if (a < 0) a += 2.0 * kPi;
    return a;
}

inline Vec2 heading_vec(double heading) { return {std::cos(heading), std::sin(heading)}; }

// Nearest parameter t >= 0 at which the ray origin + t*dir enters the
// rectangle, or nullopt if it misses. dir need not be normalized; the
// returned t is in units of |dir|. A ray starting inside returns t = 0.
std::optional<double> ray_rect_entry(const Vec2& origin, const Vec2& dir, const Rect& r);

// Parameter t >= 0 at which the ray exits the rectangle it starts inside of.
// Used for casting against the arena bounds. Returns nullopt if the origin
// is outside.
std::optional<double> ray_rect_exit(const Vec2& origin, const Vec2& dir, const Rect& r);

// Nearest t >= 0 at which the ray hits the circle, or nullopt.
std::optional<double> ray_circle(const Vec2& origin, const Vec2& dir, const Vec2& center,
                                 double radius);

// True if the closed segment a-b intersects the rectangle.
bool segment_intersects_rect(const Vec2& a, const Vec2& b, const Rect& r);

// Distance from point p to segment a-b, plus the parameter of the closest
// point (0 at a, 1 at b).
double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b, double* t_out = nullptr);

// Piecewise-linear path utilities.
double polyline_length(const std::vector<Vec2>& pts);

// Point at arc length s along the polyline (clamped to the ends).
Vec2 polyline_point_at(const std::vector<Vec2>& pts, double s);

struct PolylineProjection {
    double arc = 0.0;       // arc length of the closest point
    double distance = 0.0;  // Euclidean distance to it
    Vec2 point;
};

// Closest point on the polyline to p. Ties resolve to the smallest arc.
PolylineProjection project_to_polyline(const std::vector<Vec2>& pts, const Vec2& p);

}  // namespace navlab
