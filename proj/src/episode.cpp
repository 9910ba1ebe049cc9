#include "gapnp/episode.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <random>

#include "gapnp/errors.hpp"

namespace gapnp::sim {

std::string to_string(Termination t) {
    switch (t) {
        case Termination::laps_completed: return "laps_completed";
        case Termination::max_steps: return "max_steps";
        case Termination::stuck: return "stuck";
        case Termination::collision: return "collision";
        case Termination::aborted: return "aborted";
    }
    return "unknown";
}

namespace {

/// Tracks signed progress along the centerline in vertex units.
class ProgressTracker {
public:
    explicit ProgressTracker(const TrackMap& map) : map_(map) {}

    void reset(Vec2 p) {
        if (map_.centerline.empty()) return;
        index_ = map_.nearest_centerline_index(p);
    }

    /// Advances to the vertex nearest p and returns the signed change.
    long long update(Vec2 p) {
        const auto n = static_cast<long long>(map_.centerline.size());
        if (n == 0) return 0;
        constexpr long long window = 12;
        auto best = static_cast<long long>(index_);
        double best_d = 1e300;
        for (long long off = -window; off <= window; ++off) {
            const long long i = ((static_cast<long long>(index_) + off) % n + n) % n;
            const Vec2 d = map_.centerline[static_cast<std::size_t>(i)] - p;
            const double d2 = dot(d, d);
            if (d2 < best_d) {
                best_d = d2;
                best = i;
            }
        }
        long long delta = best - static_cast<long long>(index_);
        if (delta > n / 2) delta -= n;
        if (delta < -n / 2) delta += n;
        index_ = static_cast<std::size_t>(best);
        return delta;
    }

    std::size_t index() const { return index_; }

private:
    const TrackMap& map_;
    std::size_t index_ = 0;
};

}  // namespace

EpisodeLog run_episode(SteeringPolicy& policy, const TrackMap& map, const EpisodeConfig& cfg) {
    if (!(cfg.dt > 0.0)) throw ConfigError("episode: dt must be positive");
    if (!(cfg.r_car > 0.0)) throw ConfigError("episode: r_car must be positive");
    if (cfg.laps_target == 0 && cfg.max_steps == 0) throw ConfigError("episode: nothing to run");

    EpisodeLog log;
    log.policy = policy.name();
    log.track = map.name;

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    VehicleState state;
    state.x = map.start_pose.x;
    state.y = map.start_pose.y;
    state.theta = map.start_pose.theta;
    if (cfg.start_lateral_jitter > 0.0) {
        const double off = cfg.start_lateral_jitter * unit(rng);
        state.x += -std::sin(state.theta) * off;
        state.y += std::cos(state.theta) * off;
    }
    if (cfg.start_heading_jitter > 0.0) state.theta = wrap_angle(state.theta + cfg.start_heading_jitter * unit(rng));

    const bool can_respawn = !map.centerline.empty() && cfg.on_collision == CollisionMode::respawn;
    const double noise_halfwidth = cfg.steer_noise_std * std::sqrt(3.0);
    const long long half_lap = static_cast<long long>(map.centerline.size() / 2);

    Vec2 finish_forward{1.0, 0.0};
    if (map.has_finish_line && !map.centerline.empty()) {
        const Vec2 mid = 0.5 * (map.finish_line.a + map.finish_line.b);
        finish_forward = map.centerline_tangent(map.nearest_centerline_index(mid));
    }

    ProgressTracker progress(map);
    progress.reset({state.x, state.y});
    long long progress_since_crossing = 0;
    bool timing = false;
    double lap_start = 0.0;
    double time = 0.0;
    double previous_steering = 0.0;
    std::deque<Vec2> recent;

    policy.reset();
    log.termination = Termination::max_steps;
    for (std::size_t k = 0; k < cfg.max_steps; ++k) {
        Scan scan = raycast_scan(state, map, cfg.beams, cfg.max_range);
        if (cfg.scan_jitter > 0.0) {
            for (double& d : scan.distances)
                d = std::clamp(d + cfg.scan_jitter * unit(rng), 1e-3, cfg.max_range);
        }
        const ftg::BinnedScan binned = ftg::bin_scan(scan, cfg.bins);

        const Observation obs{scan, binned, state.v, state.omega, previous_steering, k};
        const auto t0 = std::chrono::steady_clock::now();
        double raw = policy.steer(obs);
        const double latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!std::isfinite(raw)) {
            log.termination = Termination::aborted;
            log.diagnostic = "policy '" + policy.name() + "' returned a non-finite command at step " + std::to_string(k);
            break;
        }
        if (noise_halfwidth > 0.0) raw += noise_halfwidth * unit(rng);
        const double boxed = std::clamp(raw, -cfg.vehicle.max_steer, cfg.vehicle.max_steer);

        StepRecord rec;
        rec.k = k;
        rec.time = time;
        rec.state = state;
        rec.raw_steering = raw;
        rec.policy_latency = latency;
        rec.phi_star = ftg::gap_prior(binned).phi_star;
        const double d_safe = cfg.cbf ? cfg.cbf->d_safe : 0.1;
        const cbf::SafetyValue safety = cbf::safety_value(scan, d_safe);
        rec.h = safety.h;

        double steering = boxed;
        if (cfg.cbf) {
            cbf::SafetyContext ctx;
            ctx.d_phi = safety.d_phi;
            ctx.phi = safety.phi;
            ctx.v = state.v;
            ctx.wheelbase = cfg.vehicle.wheelbase;
            ctx.d_safe = cfg.cbf->d_safe;
            ctx.alpha = cfg.cbf->alpha;
            ctx.max_steer = cfg.vehicle.max_steer;
            rec.filter = cbf::filter_steering(raw, ctx);
            steering = rec.filter->steering;
        }
        rec.steering = steering;
        rec.speed_command = ftg::speed_heuristic(steering);
        if (cfg.record_steps) rec.binned = binned.bins;

        const VehicleState next = step_dynamics(state, {steering, rec.speed_command}, cfg.dt, cfg.vehicle);
        time += cfg.dt;
        previous_steering = steering;

        const Vec2 p0{state.x, state.y}, p1{next.x, next.y};
        progress_since_crossing += progress.update(p1);
        if (map.has_finish_line && segments_intersect(p0, p1, map.finish_line) &&
            dot(p1 - p0, finish_forward) > 0.0) {
            if (!timing) {
                timing = true;
                lap_start = time;
                progress_since_crossing = 0;
            } else if (progress_since_crossing >= half_lap) {
                log.lap_times.push_back(time - lap_start);
                ++log.laps_completed;
                lap_start = time;
                progress_since_crossing = 0;
            }
        }

        state = next;
        bool ended = false;
        if (check_collision(state, map, cfg.r_car)) {
            rec.collision = true;
            ++log.collisions;
            if (can_respawn) {
                const std::size_t i = map.nearest_centerline_index({state.x, state.y});
                const Vec2 c = map.centerline[i];
                const Vec2 t = map.centerline_tangent(i);
                state = VehicleState{c.x, c.y, std::atan2(t.y, t.x), 0.0, 0.0};
                progress_since_crossing += progress.update(c);
                time += cfg.respawn_penalty;
                rec.respawned = true;
                recent.clear();
                previous_steering = 0.0;
            } else {
                log.termination = Termination::collision;
                ended = true;
            }
        }
        if (cfg.record_steps) log.steps.push_back(std::move(rec));
        log.total_steps = k + 1;
        if (ended) break;

        if (cfg.laps_target > 0 && log.laps_completed >= cfg.laps_target) {
            log.termination = Termination::laps_completed;
            break;
        }
        recent.push_back({state.x, state.y});
        if (recent.size() > cfg.stuck_steps) {
            recent.pop_front();
            if (norm(recent.back() - recent.front()) < cfg.stuck_distance) {
                log.termination = Termination::stuck;
                log.diagnostic = "no progress over " + std::to_string(cfg.stuck_steps) + " steps";
                break;
            }
        }
    }
    log.elapsed = time;
    return log;
}

double mean_steering_rate(const EpisodeLog& log, double dt) {
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 1; i < log.steps.size(); ++i) {
        const StepRecord& a = log.steps[i - 1];
        const StepRecord& b = log.steps[i];
        if (b.k != a.k + 1 || a.respawned) continue;
        if (b.state.v <= 0.0) continue;
        total += std::abs(b.steering - a.steering) / dt;
        ++pairs;
    }
    return pairs ? total / static_cast<double>(pairs) : 0.0;
}

}  // namespace gapnp::sim
