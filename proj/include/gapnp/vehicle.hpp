#pragma once

#include <cstddef>
#include <vector>

#include "gapnp/track.hpp"

namespace gapnp::sim {

inline constexpr double kMaxSteer = 0.6981;

struct VehicleState {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;  ///< heading, (-pi, pi]
    double v = 0.0;      ///< forward speed, m/s
    double omega = 0.0;  ///< yaw rate applied during the last step, rad/s
};

struct ControlCommand {
    double steering = 0.0;  ///< rad, |steering| <= kMaxSteer
    double speed = 0.0;     ///< commanded speed, m/s
};

struct VehicleParams {
    double wheelbase = 0.33;  ///< m
    double speed_tau = 0.2;   ///< first-order speed lag time constant, s
    double max_steer = kMaxSteer;
};

/// Forward-Euler step of the kinematic Ackermann model with the exact tangent.
VehicleState step_dynamics(const VehicleState& s, const ControlCommand& u, double dt,
                           const VehicleParams& params = {});

/// LiDAR sweep in the vehicle frame. Index 0 is the leftmost beam (+3pi/4).
struct Scan {
    std::vector<double> distances;
    std::vector<double> angles;
    double max_range = 10.0;

    std::size_t size() const { return distances.size(); }
};

/// Beam angles uniformly spaced from +3pi/4 down to -3pi/4 inclusive.
/// Mirror pairs (i, n-1-i) are exact negations of each other.
std::vector<double> beam_angles(std::size_t beams);

/// Casts `beams` rays from the vehicle pose. Beams without a hit, and hits
/// beyond max_range, report max_range.
Scan raycast_scan(const VehicleState& s, const TrackMap& map, std::size_t beams, double max_range);

/// Reference raycaster that tests every wall for every beam.
Scan raycast_scan_brute_force(const VehicleState& s, const TrackMap& map, std::size_t beams,
                              double max_range);

/// True iff the disc of radius r_car at (x, y) overlaps a wall (strictly closer than r_car).
bool check_collision(const VehicleState& s, const TrackMap& map, double r_car);

/// Smallest distance from (x, y) to any wall.
double wall_clearance(const VehicleState& s, const TrackMap& map);

}  // namespace gapnp::sim
