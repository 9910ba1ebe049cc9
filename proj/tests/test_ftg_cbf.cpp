#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <algorithm>

#include "gapnp/cbf.hpp"
#include "gapnp/errors.hpp"
#include "gapnp/ftg.hpp"
#include "gapnp/io.hpp"
#include "gapnp/track.hpp"
#include "qp_oracle.hpp"

using namespace gapnp;
using sim::Scan;
constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

namespace {

Scan make_scan(std::vector<double> distances, double max_range = 10.0) {
    Scan s;
    s.angles = sim::beam_angles(distances.size());
    s.distances = std::move(distances);
    s.max_range = max_range;
    return s;
}

Scan random_scan(std::mt19937_64& rng, std::size_t n = 1080) {
    std::uniform_real_distribution<double> u(0.05, 10.0);
    std::vector<double> d(n);
    for (double& x : d) x = u(rng);
    return make_scan(d);
}

Scan mirrored(const Scan& s) {
    Scan m = s;
    std::reverse(m.distances.begin(), m.distances.end());
    return m;
}

std::string fixture(const char* name) { return std::string(GAPNP_SOURCE_DIR) + "/tests/fixtures/" + name; }

}  // namespace

TEST_CASE("bin_scan hand cases") {
    const auto b = ftg::bin_scan(make_scan({1, 3, 5, 7}), 2);
    CHECK(b.bins == std::vector<double>{2, 6});
    const auto c = ftg::bin_scan(make_scan(std::vector<double>(1080, 3.0)), 54);
    for (double x : c.bins) CHECK(x == 3.0);
    for (std::size_t i = 1; i < c.size(); ++i) CHECK(c.bin_angles[i] < c.bin_angles[i - 1]);
    CHECK(c.bin_angles.front() == doctest::Approx(0.75 * kPi * (1.0 - 1.0 / 54)).epsilon(1e-3));
    CHECK_THROWS_AS(ftg::bin_scan(make_scan(std::vector<double>(1080, 1.0)), 7), ConfigError);
}

TEST_CASE("bin_scan equals per-block means") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const Scan s = random_scan(rng);
        const auto b = ftg::bin_scan(s, 54);
        for (std::size_t i = 0; i < 54; ++i) {
            double total = 0.0;
            for (std::size_t j = 0; j < 20; ++j) total += s.distances[20 * i + j];
            REQUIRE(std::abs(b.bins[i] - total / 20.0) < 1e-12);
        }
    }
}

TEST_CASE("gap prior points at the open side") {
    std::vector<double> d(1080, 1.0);
    for (std::size_t i = 0; i < 20; ++i) d[i] = 9.0;
    const auto p = ftg::gap_prior(ftg::bin_scan(make_scan(d), 54));
    CHECK(p.index == 0);
    CHECK(p.phi_star > 0.0);
    CHECK(p.phi_star == doctest::Approx(0.75 * kPi * (1.0 - 1.0 / 54)).epsilon(1e-3));
}

TEST_CASE("gap prior tie rules") {
    const auto flat = ftg::gap_prior(ftg::bin_scan(make_scan(std::vector<double>(1080, 2.0)), 54));
    // No bin center is exactly 0 with 54 bins; the two central bins tie and the left one wins.
    CHECK(flat.index == 26);
    CHECK(flat.phi_star > 0.0);
    CHECK(flat.tie_broken);

    ftg::BinnedScan b;
    b.bins = {1.0, 5.0, 2.0, 5.0, 1.0};
    b.bin_angles = {2.0, 1.0, 0.0, -0.5, -2.0};
    CHECK(ftg::gap_prior(b).index == 3);  // smaller |angle| wins
}

TEST_CASE("gap prior matches a linear argmax on unique maxima") {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 100; ++trial) {
        const auto b = ftg::bin_scan(random_scan(rng), 54);
        std::size_t arg = 0;
        for (std::size_t i = 1; i < b.size(); ++i)
            if (b.bins[i] > b.bins[arg]) arg = i;
        const auto p = ftg::gap_prior(b);
        CHECK(p.index == arg);
        CHECK(p.phi_star == b.bin_angles[arg]);
        CHECK(std::abs(p.phi_star) <= 0.75 * kPi);
    }
}

TEST_CASE("ftg: symmetric corridor drives straight") {
    const auto corridor = sim::make_corridor(-5.0, 100.0, 1.5);
    sim::VehicleState s;
    const auto scan = sim::raycast_scan(s, corridor, 1080, 10.0);
    const auto d = ftg::ftg_expert(scan);
    CHECK(std::abs(d.steering) < 1e-12);
    CHECK_FALSE(d.blocked);
}

TEST_CASE("ftg: wall on the right steers left") {
    std::vector<double> d(1080, 8.0);
    for (std::size_t i = 540; i < 1080; ++i) d[i] = 1.2;
    CHECK(ftg::ftg_expert(make_scan(d)).steering > 0.0);
}

TEST_CASE("ftg: fully blocked scan") {
    const auto d = ftg::ftg_expert(make_scan(std::vector<double>(1080, 0.5)));
    CHECK(d.blocked);
    CHECK(d.steering == 0.0);
}

TEST_CASE("ftg golden fixture") {
    const Scan s = load_scan(fixture("oval_seed0.scan"), 10.0);
    REQUIRE(s.size() == 1080);
    const auto d = ftg::ftg_expert(s);
    CHECK(d.steering == doctest::Approx(0.0963004419).epsilon(1e-9));
    CHECK(d.gap_first == 0);
    CHECK(d.gap_last == 678);
    const auto p = ftg::gap_prior(ftg::bin_scan(s, 54));
    CHECK(p.index == 26);
    CHECK(p.phi_star == doctest::Approx(0.0436736695).epsilon(1e-9));
}

TEST_CASE("ftg and gap prior are mirror antisymmetric") {
    std::mt19937_64 rng(33);
    const sim::TrackMap maps[] = {sim::make_oval_track(), sim::make_scurve_track(), sim::make_pinch_chicane_track()};
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        Scan s;
        if (trial % 2 == 0) {
            s = random_scan(rng);
        } else {
            const auto& map = maps[static_cast<std::size_t>(trial) % 3];
            const std::size_t i = static_cast<std::size_t>(std::abs(u(rng)) * static_cast<double>(map.centerline.size() - 1));
            const Vec2 c = map.centerline[i], t = map.centerline_tangent(i);
            const double off = 0.5 * u(rng);
            sim::VehicleState v;
            v.x = c.x - t.y * off;
            v.y = c.y + t.x * off;
            v.theta = std::atan2(t.y, t.x) + 0.5 * u(rng);
            s = sim::raycast_scan(v, map, 1080, 10.0);
        }
        const Scan m = mirrored(s);
        const auto a = ftg::ftg_expert(s), b = ftg::ftg_expert(m);
        REQUIRE(std::abs(a.steering + b.steering) < 1e-9);
        CHECK(std::abs(a.steering) <= sim::kMaxSteer);
        const auto pa = ftg::gap_prior(ftg::bin_scan(s, 54)), pb = ftg::gap_prior(ftg::bin_scan(m, 54));
        if (!pa.tie_broken) REQUIRE(pa.phi_star == -pb.phi_star);
    }
}

TEST_CASE("speed heuristic table") {
    CHECK(ftg::speed_heuristic(15 * kDeg) == 1.5);
    CHECK(ftg::speed_heuristic(7 * kDeg) == 3.0);
    CHECK(ftg::speed_heuristic(5 * kDeg) == 5.0);
    CHECK(ftg::speed_heuristic(-15 * kDeg) == 1.5);
    CHECK(ftg::speed_heuristic(10 * kDeg) == 3.0);
    CHECK(ftg::speed_heuristic(std::nextafter(10 * kDeg, 1.0)) == 1.5);
    CHECK(ftg::speed_heuristic(std::nextafter(5 * kDeg, 1.0)) == 3.0);
}

TEST_CASE("speed heuristic is a three-level step function") {
    std::set<double> seen;
    for (int i = -100000; i <= 100000; ++i) {
        const double delta = sim::kMaxSteer * i / 100000.0;
        const double v = ftg::speed_heuristic(delta);
        seen.insert(v);
        const double deg = std::abs(delta) / kDeg;
        const double expected = deg > 10.0 ? 1.5 : (deg > 5.0 ? 3.0 : 5.0);
        REQUIRE(v == expected);
    }
    CHECK(seen.size() == 3);
}

TEST_CASE("safety value cases") {
    const auto flat = cbf::safety_value(make_scan(std::vector<double>(7, 5.0)), 0.1);
    CHECK(flat.h == doctest::Approx(4.9).epsilon(1e-15));
    CHECK(flat.phi == 0.0);
    std::vector<double> d(7, 5.0);
    d[1] = 0.05;  // +pi/2
    const auto close = cbf::safety_value(make_scan(d), 0.1);
    CHECK(close.phi == doctest::Approx(kPi / 2).epsilon(1e-15));
    CHECK(close.h == doctest::Approx(-0.05).epsilon(1e-12));

    std::mt19937_64 rng(34);
    for (int trial = 0; trial < 1000; ++trial) {
        const Scan s = random_scan(rng, 108);
        std::size_t arg = 0;
        for (std::size_t i = 1; i < s.size(); ++i)
            if (s.distances[i] < s.distances[arg]) arg = i;
        const auto sv = cbf::safety_value(s, 0.1);
        REQUIRE(sv.d_phi == s.distances[arg]);
        REQUIRE(sv.phi == s.angles[arg]);
    }
}

TEST_CASE("lie derivative cases") {
    cbf::SafetyContext c;
    c.v = 3.0;
    c.phi = 0.0;
    auto l = cbf::lie_derivatives(c);
    CHECK(l.lf == -3.0);
    CHECK(l.lg == 0.0);

    c.v = 2.0;
    c.phi = kPi / 2;
    c.d_phi = 1.0;
    l = cbf::lie_derivatives(c);
    CHECK(std::abs(l.lf) < 1e-12);
    CHECK(l.lg == doctest::Approx(2.0 / 0.33).epsilon(1e-12));
    CHECK(l.lg == doctest::Approx(6.0606).epsilon(1e-4));

    c.v = 0.0;
    l = cbf::lie_derivatives(c);
    CHECK(l.lf == 0.0);
    CHECK(l.lg == 0.0);
}

TEST_CASE("filter: inactive constraint leaves the command alone") {
    cbf::SafetyContext c;
    c.d_phi = 5.0;
    c.phi = 1.0;
    c.v = 3.0;
    const auto r = cbf::filter_steering(0.2, c);
    CHECK(r.steering == 0.2);
    CHECK_FALSE(r.active);
    CHECK(r.feasible);
}

namespace {

/// Context with a positive Lg whose constraint reads delta >= bound.
cbf::SafetyContext context_with_bound(double bound) {
    cbf::SafetyContext c;
    c.v = 3.0;
    c.phi = 0.3;
    c.d_phi = 0.2;
    c.d_safe = 0.1;
    const double a = c.v / c.wheelbase * c.d_phi * std::sin(c.phi);
    c.alpha = (c.v * std::cos(c.phi) - bound * a) / c.h();
    return c;
}

}  // namespace

TEST_CASE("filter: active and infeasible constructed cases") {
    const auto active = cbf::filter_steering(0.2, context_with_bound(0.5));
    CHECK(active.steering == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(active.active);
    CHECK(active.feasible);
    CHECK(std::abs(active.steering - testsupport::grid_qp(0.2, context_with_bound(0.5))) < 1e-6);

    const auto infeasible = cbf::filter_steering(0.2, context_with_bound(0.9));
    CHECK_FALSE(infeasible.feasible);
    CHECK(infeasible.steering == sim::kMaxSteer);
    CHECK(testsupport::grid_qp(0.2, context_with_bound(0.9)) == sim::kMaxSteer);

    cbf::SafetyContext ahead;
    ahead.phi = 0.0;
    ahead.v = 4.0;
    ahead.d_phi = 0.15;
    const auto degenerate = cbf::filter_steering(0.3, ahead);
    CHECK_FALSE(degenerate.feasible);
    CHECK(degenerate.steering == 0.3);

    const auto clamped = cbf::filter_steering(1.2, context_with_bound(-0.1));
    CHECK(clamped.clamped_input);
    CHECK(clamped.steering == sim::kMaxSteer);
}

TEST_CASE("filter: contract errors") {
    cbf::SafetyContext c;
    CHECK_THROWS_AS(cbf::filter_steering(std::nan(""), c), ContractError);
    c.d_safe = 0.2;
    CHECK_THROWS_AS(cbf::filter_steering(0.0, c), ContractError);
    c.d_safe = 0.1;
    c.v = INFINITY;
    CHECK_THROWS_AS(cbf::filter_steering(0.0, c), ContractError);
}

TEST_CASE("filter matches the grid QP oracle") {
    std::mt19937_64 rng(35);
    std::uniform_real_distribution<double> raw(-0.8, 0.8);
    for (int trial = 0; trial < 10000; ++trial) {
        const auto c = testsupport::random_context(rng);
        const double d = raw(rng);
        REQUIRE(std::abs(cbf::filter_steering(d, c).steering - testsupport::grid_qp(d, c)) < 1e-6);
    }
}

TEST_CASE("filter properties: box, residual, idempotence, minimality") {
    std::mt19937_64 rng(36);
    std::uniform_real_distribution<double> raw(-0.6981, 0.6981), unit(0.0, 1.0);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto c = testsupport::random_context(rng);
        const double d = raw(rng);
        const auto r = cbf::filter_steering(d, c);
        REQUIRE(std::abs(r.steering) <= c.max_steer);
        if (r.feasible) REQUIRE(r.residual(c.alpha) >= -1e-9);
        REQUIRE(std::abs(cbf::filter_steering(r.steering, c).steering - r.steering) <= 1e-12);
        if (!r.feasible) continue;
        // Sample the feasible set and confirm nothing is closer to the raw command.
        int checked = 0;
        for (int k = 0; k < 10000 && checked < 5; ++k) {
            const double x = -c.max_steer + 2.0 * c.max_steer * unit(rng);
            if (r.lf + r.lg * x + c.alpha * r.h < 0.0) continue;
            ++checked;
            REQUIRE(std::abs(r.steering - d) <= std::abs(x - d) + 1e-12);
        }
    }
}

TEST_CASE("filter minimality against 10^4 feasible samples") {
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto c = context_with_bound(0.1);
    const auto r = cbf::filter_steering(-0.4, c);
    REQUIRE(r.feasible);
    int n = 0;
    while (n < 10000) {
        const double x = -c.max_steer + 2.0 * c.max_steer * unit(rng);
        if (r.lf + r.lg * x + c.alpha * r.h < 0.0) continue;
        ++n;
        REQUIRE(std::abs(r.steering + 0.4) <= std::abs(x + 0.4));
    }
}

TEST_CASE("lower bound is non-increasing in alpha when h > 0") {
    std::mt19937_64 rng(38);
    std::uniform_real_distribution<double> scale(1.0, 3.0);
    for (int trial = 0; trial < 1000; ++trial) {
        auto c = testsupport::random_context(rng);
        const auto lie = cbf::lie_derivatives(c);
        if (lie.lg <= cbf::kLgEpsilon || c.h() <= 0.0) continue;
        const double b1 = (-lie.lf - c.alpha * c.h()) / lie.lg;
        c.alpha *= scale(rng);
        const double b2 = (-lie.lf - c.alpha * c.h()) / lie.lg;
        REQUIRE(b2 <= b1);
        CHECK(cbf::filter_steering(-c.max_steer, c).steering <= std::max(b1, -c.max_steer) + 1e-12);
    }
}

TEST_CASE("certificate arithmetic") {
    CHECK(cbf::certify_step(1.0, 1.0, 0.005, 2.0));
    CHECK_FALSE(cbf::certify_step(1.0, 0.5, 0.005, 2.0));
    // Exact boundary: (h1 - h0) / dt = -alpha h0.
    CHECK(cbf::certify_step(1.0, 1.0 - 0.005 * 2.0, 0.005, 2.0));
    CHECK(cbf::certify_step(0.5, 0.5 - 0.005 - 0.4e-8, 0.005, 2.0));
    CHECK_FALSE(cbf::certify_step(0.5, 0.5 - 0.005 - 1e-8, 0.005, 2.0));
    CHECK_THROWS_AS(cbf::certify_step(1.0, 1.0, 0.0, 2.0), ContractError);

    // Exponential decay at rate alpha never violates; faster decay does.
    double h = 1.0;
    for (int k = 0; k < 100; ++k) {
        const double next = h * (1.0 - 2.0 * 0.005);
        CHECK(cbf::certify_step(h, next, 0.005, 2.0));
        CHECK_FALSE(cbf::certify_step(h, h * (1.0 - 2.5 * 0.005), 0.005, 2.0));
        h = next;
    }
}

TEST_CASE("near-wall fixture through the filter") {
    const Scan s = load_scan(fixture("near_wall.scan"), 10.0);
    const auto sv = cbf::safety_value(s, 0.1);
    CHECK(sv.d_phi == doctest::Approx(0.300001).epsilon(1e-9));
    cbf::SafetyContext c;
    c.d_phi = sv.d_phi;
    c.phi = sv.phi;
    c.v = 3.0;
    const auto r = cbf::filter_steering(0.0, c);
    CHECK(r.feasible);
    CHECK(r.active);
    CHECK(r.steering == doctest::Approx(-0.308941686).epsilon(1e-8));
    CHECK(std::abs(r.residual(c.alpha)) < 1e-12);
}
