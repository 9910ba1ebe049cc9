#pragma once

#include <cstddef>
#include <vector>

#include "gapnp/vehicle.hpp"

namespace gapnp::ftg {

/// Scan condensed into b equal angular blocks of mean range.
struct BinnedScan {
    std::vector<double> bins;
    std::vector<double> bin_angles;  ///< block center angles, leftmost first

    std::size_t size() const { return bins.size(); }
};

/// Averages each of `b` contiguous blocks of beams. Throws ConfigError unless
/// b divides the beam count.
BinnedScan bin_scan(const sim::Scan& scan, std::size_t b);

/// Direction of the most open bin, used as the steering prior.
struct GapPrior {
    double phi_star = 0.0;
    std::size_t index = 0;
    bool tie_broken = false;  ///< true when equal |angle| candidates were split toward the left
};

/// Bin with the largest mean range. Ties go to the smallest |angle|, then to
/// the left (positive) side.
GapPrior gap_prior(const BinnedScan& binned);

struct FtgParams {
    double bubble_radius = 0.8;  ///< m
    double gap_threshold = 1.5;  ///< m
    double steer_gain = 0.9;
    double max_range = 10.0;     ///< m
    double max_steer = sim::kMaxSteer;
};

struct FtgDecision {
    double steering = 0.0;
    bool blocked = false;     ///< every beam was inside the bubble or below threshold
    bool tie_broken = false;  ///< a left/right tie decided the result
    std::size_t gap_first = 0;
    std::size_t gap_last = 0;
    double target_angle = 0.0;
};

/// Classical Follow-The-Gap: bubble the nearest return, pick the widest gap of
/// beams deeper than the threshold and steer toward its deepest point.
FtgDecision ftg_expert(const sim::Scan& scan, const FtgParams& params = {});

/// Three-level speed schedule on |steering|: 5.0 m/s up to 5 deg,
/// 3.0 m/s up to 10 deg, 1.5 m/s beyond.
double speed_heuristic(double steering);

}  // namespace gapnp::ftg
