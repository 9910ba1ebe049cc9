#include "gapnp/ftg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gapnp/errors.hpp"

namespace gapnp::ftg {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Sums a block by folding mirror pairs first, so a reversed block gives a
// bit-identical total.
double symmetric_sum(const double* x, std::size_t n) {
    double total = 0.0;
    for (std::size_t j = 0; j < n / 2; ++j) total += x[j] + x[n - 1 - j];
    if (n % 2) total += x[n / 2];
    return total;
}

// Returns true if candidate (angle a) should replace incumbent (angle b) on a
// value tie: smaller |angle| wins, then the positive side. Sets tie flag when
// the two are mirror images.
bool prefer_on_tie(double a, double b, bool& mirror_tie) {
    if (std::abs(a) != std::abs(b)) return std::abs(a) < std::abs(b);
    mirror_tie = true;
    return a > b;
}

}  // namespace

BinnedScan bin_scan(const sim::Scan& scan, std::size_t b) {
    const std::size_t o = scan.size();
    if (b == 0 || o == 0 || o % b != 0) {
        throw ConfigError("bin_scan: bin count " + std::to_string(b) + " does not divide " +
                          std::to_string(o) + " beams");
    }
    const std::size_t per = o / b;
    BinnedScan out;
    out.bins.resize(b);
    out.bin_angles.resize(b);
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t first = i * per;
        out.bins[i] = symmetric_sum(scan.distances.data() + first, per) / static_cast<double>(per);
        out.bin_angles[i] = 0.5 * (scan.angles[first] + scan.angles[first + per - 1]);
    }
    return out;
}

GapPrior gap_prior(const BinnedScan& binned) {
    if (binned.size() == 0) throw ContractError("gap_prior: empty binned scan");
    GapPrior best{binned.bin_angles[0], 0, false};
    double best_value = binned.bins[0];
    bool mirror_tie = false;
    for (std::size_t i = 1; i < binned.size(); ++i) {
        const double v = binned.bins[i];
        const double a = binned.bin_angles[i];
        if (v > best_value) {
            best_value = v;
            best = {a, i, false};
            mirror_tie = false;
        } else if (v == best_value) {
            bool tie = false;
            if (prefer_on_tie(a, best.phi_star, tie)) best = {a, i, false};
            if (tie) mirror_tie = true;
        }
    }
    best.tie_broken = mirror_tie;
    return best;
}

FtgDecision ftg_expert(const sim::Scan& scan, const FtgParams& p) {
    const std::size_t n = scan.size();
    if (n == 0 || scan.angles.size() != n) throw ContractError("ftg_expert: malformed scan");
    FtgDecision decision;

    std::vector<double> ranges(n);
    for (std::size_t i = 0; i < n; ++i) ranges[i] = std::min(scan.distances[i], p.max_range);

    // Nearest return; ties resolved like the gap prior.
    std::size_t nearest = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (ranges[i] < ranges[nearest]) {
            nearest = i;
        } else if (ranges[i] == ranges[nearest]) {
            bool tie = false;
            if (prefer_on_tie(scan.angles[i], scan.angles[nearest], tie)) nearest = i;
            if (tie) decision.tie_broken = true;
        }
    }

    // Safety bubble: beams whose bearing is within the half-angle subtended by
    // a disc of bubble_radius around the nearest hit.
    const double d_min = ranges[nearest];
    const double half_angle =
        d_min <= p.bubble_radius ? std::numbers::pi : std::asin(p.bubble_radius / d_min);
    const double nearest_angle = scan.angles[nearest];
    std::vector<bool> free(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool in_bubble = std::abs(scan.angles[i] - nearest_angle) <= half_angle;
        free[i] = !in_bubble && ranges[i] > p.gap_threshold;
    }

    // Widest run of free beams; equal widths prefer the run centered nearest 0.
    bool found = false;
    std::size_t best_first = 0, best_last = 0;
    for (std::size_t i = 0; i < n;) {
        if (!free[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < n && free[j + 1]) ++j;
        const std::size_t width = j - i + 1;
        const std::size_t best_width = best_last - best_first + 1;
        const double center = 0.5 * (scan.angles[i] + scan.angles[j]);
        const double best_center = 0.5 * (scan.angles[best_first] + scan.angles[best_last]);
        bool take = !found || width > best_width;
        if (found && width == best_width) {
            bool tie = false;
            take = prefer_on_tie(center, best_center, tie);
            if (tie) decision.tie_broken = true;
        }
        if (take) {
            best_first = i;
            best_last = j;
            found = true;
        }
        i = j + 1;
    }
    if (!found) {
        decision.blocked = true;
        decision.steering = 0.0;
        return decision;
    }

    // Deepest point of the gap; a plateau of equal depth aims at its middle.
    std::size_t deep_first = best_first;
    for (std::size_t i = best_first; i <= best_last; ++i)
        if (ranges[i] > ranges[deep_first]) deep_first = i;
    std::size_t deep_last = deep_first;
    for (std::size_t i = deep_first; i <= best_last; ++i)
        if (ranges[i] == ranges[deep_first]) deep_last = i;

    decision.gap_first = best_first;
    decision.gap_last = best_last;
    decision.target_angle = 0.5 * (scan.angles[deep_first] + scan.angles[deep_last]);
    decision.steering = std::clamp(p.steer_gain * decision.target_angle, -p.max_steer, p.max_steer);
    return decision;
}

double speed_heuristic(double steering) {
    const double mag = std::abs(steering);
    if (mag > 10.0 * kDeg) return 1.5;
    if (mag > 5.0 * kDeg) return 3.0;
    return 5.0;
}

}  // namespace gapnp::ftg
