#include "gapnp/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gapnp/errors.hpp"

namespace gapnp::sim {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kHalfFov = 3.0 * kPi / 4.0;

bool finite_state(const VehicleState& s) {
    return std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.theta) &&
           std::isfinite(s.v) && std::isfinite(s.omega);
}

void require_inside(const VehicleState& s, const TrackMap& map) {
    if (!finite_state(s)) throw ContractError("raycast_scan: non-finite vehicle state");
    if (!map.contains({s.x, s.y})) {
        throw ContractError("raycast_scan: vehicle at (" + std::to_string(s.x) + ", " +
                            std::to_string(s.y) + ") is outside track '" + map.name + "'");
    }
}

Scan empty_scan(std::size_t beams, double max_range) {
    if (beams < 2) throw ContractError("raycast_scan: need at least 2 beams");
    if (!(max_range > 0.0)) throw ContractError("raycast_scan: max_range must be positive");
    Scan scan;
    scan.angles = beam_angles(beams);
    scan.distances.assign(beams, max_range);
    scan.max_range = max_range;
    return scan;
}

}  // namespace

VehicleState step_dynamics(const VehicleState& s, const ControlCommand& u, double dt,
                           const VehicleParams& params) {
    if (!finite_state(s) || !std::isfinite(u.steering) || !std::isfinite(u.speed)) {
        throw ContractError("step_dynamics: non-finite state or command");
    }
    if (!(dt > 0.0)) throw ContractError("step_dynamics: dt must be positive");
    if (std::abs(u.steering) > params.max_steer + 1e-12) {
        throw ContractError("step_dynamics: steering " + std::to_string(u.steering) + " exceeds limit");
    }
    const double yaw_rate = s.v / params.wheelbase * std::tan(u.steering);
    VehicleState next;
    next.x = s.x + s.v * std::cos(s.theta) * dt;
    next.y = s.y + s.v * std::sin(s.theta) * dt;
    next.theta = wrap_angle(s.theta + yaw_rate * dt);
    next.v = std::max(0.0, s.v + (u.speed - s.v) * dt / params.speed_tau);
    next.omega = yaw_rate;
    return next;
}

std::vector<double> beam_angles(std::size_t beams) {
    if (beams < 2) throw ContractError("beam_angles: need at least 2 beams");
    std::vector<double> angles(beams);
    const double step = kHalfFov / static_cast<double>(beams - 1);
    const auto last = static_cast<long long>(beams - 1);
    for (std::size_t i = 0; i < beams; ++i) {
        angles[i] = static_cast<double>(last - 2 * static_cast<long long>(i)) * step;
    }
    return angles;
}

Scan raycast_scan(const VehicleState& s, const TrackMap& map, std::size_t beams, double max_range) {
    Scan scan = empty_scan(beams, max_range);
    require_inside(s, map);
    const Vec2 origin{s.x, s.y};
    const double spacing = 2.0 * kHalfFov / static_cast<double>(beams - 1);
    const auto last = static_cast<long long>(beams - 1);

    // Each wall covers an angular interval as seen from the vehicle; only beams
    // inside that interval (plus one beam of slack) need an exact intersection test.
    auto test_range = [&](double lo, double hi, const Segment& w) {
        lo = std::max(lo, -kHalfFov);
        hi = std::min(hi, kHalfFov);
        if (lo > hi + spacing) return;
        auto first = static_cast<long long>(std::floor((kHalfFov - hi) / spacing)) - 1;
        auto final = static_cast<long long>(std::ceil((kHalfFov - lo) / spacing)) + 1;
        first = std::max(first, 0LL);
        final = std::min(final, last);
        for (long long i = first; i <= final; ++i) {
            const double a = s.theta + scan.angles[static_cast<std::size_t>(i)];
            if (auto t = ray_segment_distance(origin, {std::cos(a), std::sin(a)}, w)) {
                double& d = scan.distances[static_cast<std::size_t>(i)];
                d = std::min(d, *t);
            }
        }
    };

    for (const Segment& w : map.walls) {
        const Vec2 pa = w.a - origin, pb = w.b - origin;
        // Quick reject: segment entirely beyond max_range.
        if (point_segment_distance(origin, w) >= max_range) continue;
        const double alpha = wrap_angle(std::atan2(pa.y, pa.x) - s.theta);
        const double span = wrap_angle(std::atan2(pb.y, pb.x) - s.theta - alpha);
        const double lo = std::min(alpha, alpha + span);
        const double hi = std::max(alpha, alpha + span);
        for (double shift : {0.0, 2.0 * kPi, -2.0 * kPi}) test_range(lo + shift, hi + shift, w);
    }
    for (double& d : scan.distances) d = std::min(d, max_range);
    return scan;
}

Scan raycast_scan_brute_force(const VehicleState& s, const TrackMap& map, std::size_t beams,
                              double max_range) {
    Scan scan = empty_scan(beams, max_range);
    require_inside(s, map);
    const Vec2 origin{s.x, s.y};
    for (std::size_t i = 0; i < beams; ++i) {
        const double a = s.theta + scan.angles[i];
        const Vec2 dir{std::cos(a), std::sin(a)};
        double best = max_range;
        for (const Segment& w : map.walls) {
            if (auto t = ray_segment_distance(origin, dir, w)) best = std::min(best, *t);
        }
        scan.distances[i] = best;
    }
    return scan;
}

double wall_clearance(const VehicleState& s, const TrackMap& map) {
    double best = std::numeric_limits<double>::infinity();
    for (const Segment& w : map.walls) best = std::min(best, point_segment_distance({s.x, s.y}, w));
    return best;
}

bool check_collision(const VehicleState& s, const TrackMap& map, double r_car) {
    if (!(r_car > 0.0)) throw ContractError("check_collision: r_car must be positive");
    return wall_clearance(s, map) < r_car;
}

}  // namespace gapnp::sim
