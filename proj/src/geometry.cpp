#include "gapnp/geometry.hpp"

#include <algorithm>

namespace gapnp {

double point_segment_distance(Vec2 p, const Segment& s) {
    const Vec2 d = s.b - s.a;
    const double len2 = dot(d, d);
    double t = len2 > 0.0 ? dot(p - s.a, d) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return norm(p - (s.a + t * d));
}

std::optional<double> ray_segment_distance(Vec2 origin, Vec2 dir, const Segment& s) {
    const Vec2 e = s.b - s.a;
    const double denom = cross(dir, e);
    if (denom == 0.0) return std::nullopt;
    const Vec2 w = s.a - origin;
    const double t = cross(w, e) / denom;
    const double u = cross(w, dir) / denom;
    if (t < 0.0 || u < 0.0 || u > 1.0) return std::nullopt;
    return t;
}

bool segments_intersect(Vec2 p, Vec2 q, const Segment& s) {
    const Vec2 r = q - p;
    const Vec2 e = s.b - s.a;
    const double denom = cross(r, e);
    if (denom == 0.0) return false;
    const Vec2 w = s.a - p;
    const double t = cross(w, e) / denom;
    const double u = cross(w, r) / denom;
    return t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0;
}

}  // namespace gapnp
