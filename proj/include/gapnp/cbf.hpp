#pragma once

#include "gapnp/vehicle.hpp"

namespace gapnp::cbf {

/// Measurement-space barrier value h = d_phi - d_safe from the closest return.
struct SafetyValue {
    double h = 0.0;
    double phi = 0.0;    ///< bearing of the closest beam, vehicle frame
    double d_phi = 0.0;  ///< closest range
};

/// Closest beam over the raw scan; ties go to the smallest |angle|, then left.
SafetyValue safety_value(const sim::Scan& scan, double d_safe);

struct SafetyContext {
    double d_phi = 1.0;
    double phi = 0.0;
    double v = 0.0;
    double wheelbase = 0.33;
    double d_safe = 0.1;
    double alpha = 2.0;
    double max_steer = sim::kMaxSteer;

    double h() const { return d_phi - d_safe; }
};

/// Throws ContractError on non-finite fields or violated ranges
/// (d_phi > 0, 0 < d_safe <= 0.1, alpha > 0, max_steer > 0).
void validate(const SafetyContext& ctx);

struct LieDerivatives {
    double lf = 0.0;  ///< -v cos(phi)
    double lg = 0.0;  ///< (v / L) d_phi sin(phi)
};

LieDerivatives lie_derivatives(const SafetyContext& ctx);

struct FilterResult {
    double steering = 0.0;     ///< filtered command
    bool feasible = true;
    bool active = false;       ///< barrier constraint binds at the optimum
    bool clamped_input = false;  ///< raw command was outside the steering box
    double h = 0.0;
    double lf = 0.0;
    double lg = 0.0;
    double solve_time = 0.0;   ///< seconds

    /// Lf + Lg * steering + alpha * h for the given alpha.
    double residual(double alpha) const { return lf + lg * steering + alpha * h; }
};

/// Degeneracy threshold on |Lg| below which steering has no first-order effect.
inline constexpr double kLgEpsilon = 1e-6;

/// Closed-form minimiser of (delta - raw)^2 / 2 subject to
/// Lf + Lg delta + alpha h >= 0 and |delta| <= max_steer.
/// When the set is empty the box endpoint maximising Lg delta is returned
/// with feasible = false (the raw command when Lg is degenerate).
FilterResult filter_steering(double delta_raw, const SafetyContext& ctx,
                             double lg_epsilon = kLgEpsilon);

/// Discrete certificate (h_after - h_before) / dt + alpha h_before >= -tol.
bool certify_step(double h_before, double h_after, double dt, double alpha, double tol = 1e-6);

}  // namespace gapnp::cbf
