#pragma once

#include <cmath>
#include <numbers>
#include <optional>

namespace gapnp {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

struct Segment {
    Vec2 a;
    Vec2 b;
    friend bool operator==(const Segment&, const Segment&) = default;
};

struct Pose {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
    constexpr double pi = std::numbers::pi;
    a = std::remainder(a, 2.0 * pi);
    if (a <= -pi) a += 2.0 * pi;
    return a;
}

double point_segment_distance(Vec2 p, const Segment& s);

/// Distance along the ray origin + t*dir (t >= 0, dir unit length) to the
/// segment, or nullopt when the ray misses. Parallel rays never hit.
std::optional<double> ray_segment_distance(Vec2 origin, Vec2 dir, const Segment& s);

/// True when the open segments p-q and s intersect (proper or touching).
bool segments_intersect(Vec2 p, Vec2 q, const Segment& s);

}  // namespace gapnp
