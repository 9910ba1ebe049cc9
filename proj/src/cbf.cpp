#include "gapnp/cbf.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "gapnp/errors.hpp"

namespace gapnp::cbf {

SafetyValue safety_value(const sim::Scan& scan, double d_safe) {
    if (scan.size() == 0) throw ContractError("safety_value: empty scan");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scan.size(); ++i) {
        const double d = scan.distances[i], db = scan.distances[best];
        if (d < db) {
            best = i;
        } else if (d == db) {
            const double a = std::abs(scan.angles[i]), ab = std::abs(scan.angles[best]);
            if (a < ab || (a == ab && scan.angles[i] > scan.angles[best])) best = i;
        }
    }
    const double d_phi = scan.distances[best];
    return {d_phi - d_safe, scan.angles[best], d_phi};
}

void validate(const SafetyContext& c) {
    for (double x : {c.d_phi, c.phi, c.v, c.wheelbase, c.d_safe, c.alpha, c.max_steer}) {
        if (!std::isfinite(x)) throw ContractError("safety context has a non-finite field");
    }
    if (!(c.d_phi > 0.0)) throw ContractError("safety context: d_phi must be positive");
    if (!(c.d_safe > 0.0 && c.d_safe <= 0.1)) throw ContractError("safety context: d_safe must lie in (0, 0.1]");
    if (!(c.alpha > 0.0)) throw ContractError("safety context: alpha must be positive");
    if (!(c.wheelbase > 0.0)) throw ContractError("safety context: wheelbase must be positive");
    if (!(c.max_steer > 0.0)) throw ContractError("safety context: max_steer must be positive");
}

LieDerivatives lie_derivatives(const SafetyContext& c) {
    return {-c.v * std::cos(c.phi), c.v / c.wheelbase * c.d_phi * std::sin(c.phi)};
}

FilterResult filter_steering(double delta_raw, const SafetyContext& ctx, double lg_epsilon) {
    const auto start = std::chrono::steady_clock::now();
    if (!std::isfinite(delta_raw)) throw ContractError("filter_steering: non-finite raw steering");
    validate(ctx);

    FilterResult r;
    const double box = ctx.max_steer;
    const double raw = std::clamp(delta_raw, -box, box);
    r.clamped_input = raw != delta_raw;
    r.h = ctx.h();
    const LieDerivatives lie = lie_derivatives(ctx);
    r.lf = lie.lf;
    r.lg = lie.lg;

    // Constraint in the form A * delta >= B.
    const double a = lie.lg;
    const double b = -lie.lf - ctx.alpha * r.h;
    if (a > lg_epsilon) {
        const double bound = b / a;
        if (bound > box) {
            r.feasible = false;
            r.steering = box;
        } else {
            r.steering = std::max(raw, bound);
            r.active = raw < bound;
        }
    } else if (a < -lg_epsilon) {
        const double bound = b / a;
        if (bound < -box) {
            r.feasible = false;
            r.steering = -box;
        } else {
            r.steering = std::min(raw, bound);
            r.active = raw > bound;
        }
    } else {
        r.feasible = b <= 0.0;
        r.steering = raw;
    }
    r.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

bool certify_step(double h_before, double h_after, double dt, double alpha, double tol) {
    if (!(dt > 0.0)) throw ContractError("certify_step: dt must be positive");
    return (h_after - h_before) / dt + alpha * h_before >= -tol;
}

}  // namespace gapnp::cbf
