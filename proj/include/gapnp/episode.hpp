#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gapnp/cbf.hpp"
#include "gapnp/ftg.hpp"
#include "gapnp/vehicle.hpp"

namespace gapnp::sim {

/// What a steering policy sees at step k.
struct Observation {
    const Scan& scan;
    const ftg::BinnedScan& binned;
    double v = 0.0;
    double omega = 0.0;
    double previous_steering = 0.0;  ///< command applied at step k-1
    std::size_t step = 0;
};

class SteeringPolicy {
public:
    virtual ~SteeringPolicy() = default;
    virtual std::string name() const = 0;
    /// Called once before each episode.
    virtual void reset() {}
    /// Raw steering command for the next step.
    virtual double steer(const Observation& obs) = 0;
};

/// Follow-The-Gap on the raw scan.
class FtgPolicy final : public SteeringPolicy {
public:
    explicit FtgPolicy(ftg::FtgParams params = {}) : params_(params) {}
    std::string name() const override { return "ftg"; }
    double steer(const Observation& obs) override { return ftg::ftg_expert(obs.scan, params_).steering; }

private:
    ftg::FtgParams params_;
};

/// Always returns the same steering angle.
class ConstantPolicy final : public SteeringPolicy {
public:
    explicit ConstantPolicy(double steering) : steering_(steering) {}
    std::string name() const override { return "constant"; }
    double steer(const Observation&) override { return steering_; }

private:
    double steering_;
};

enum class CollisionMode { terminate, respawn };

struct CbfSettings {
    double alpha = 2.0;
    double d_safe = 0.1;
};

struct EpisodeConfig {
    double dt = 0.005;
    std::size_t max_steps = 60000;
    std::size_t laps_target = 1;
    double r_car = 0.25;
    std::size_t beams = 1080;
    std::size_t bins = 54;
    double max_range = 10.0;
    VehicleParams vehicle;
    std::optional<CbfSettings> cbf;
    CollisionMode on_collision = CollisionMode::respawn;
    double respawn_penalty = 1.0;      ///< s added to the clock per respawn
    std::size_t stuck_steps = 400;     ///< window for the no-progress check
    double stuck_distance = 0.05;      ///< m of travel required per window
    double steer_noise_std = 0.0;      ///< rad, uniform noise added to the raw command
    double scan_jitter = 0.0;          ///< m, uniform +- jitter added to each beam
    double start_lateral_jitter = 0.0; ///< m, uniform +- offset of the start pose
    double start_heading_jitter = 0.0; ///< rad, uniform +- offset of the start heading
    std::uint64_t seed = 0;
    bool record_steps = true;
};

struct StepRecord {
    std::size_t k = 0;
    double time = 0.0;
    VehicleState state;              ///< state at which the scan was taken
    std::vector<double> binned;      ///< binned scan
    double phi_star = 0.0;           ///< gap prior for this scan
    double raw_steering = 0.0;       ///< policy output after noise, before the filter
    double steering = 0.0;           ///< applied command
    double speed_command = 0.0;
    double h = 0.0;                  ///< barrier value of this scan (d_safe from config or 0.1)
    std::optional<cbf::FilterResult> filter;
    bool collision = false;          ///< a new collision event began at this step
    bool respawned = false;          ///< the step ended with a respawn
    double policy_latency = 0.0;     ///< s
};

enum class Termination { laps_completed, max_steps, stuck, collision, aborted };

std::string to_string(Termination t);

struct EpisodeLog {
    std::string policy;
    std::string track;
    std::vector<StepRecord> steps;
    std::vector<double> lap_times;   ///< completed lap durations, s
    std::size_t collisions = 0;
    std::size_t laps_completed = 0;
    std::size_t total_steps = 0;
    double elapsed = 0.0;            ///< simulated time including penalties, s
    Termination termination = Termination::max_steps;
    std::string diagnostic;
};

/// Runs one episode at fixed dt: scan, policy, optional barrier filter,
/// speed heuristic, dynamics. Lap timing starts at the first forward crossing
/// of the finish line; later crossings count once at least half of the
/// centerline has been covered since the previous crossing.
EpisodeLog run_episode(SteeringPolicy& policy, const TrackMap& map, const EpisodeConfig& cfg);

/// Mean |delta_{k+1} - delta_k| / dt over consecutive recorded commands.
double mean_steering_rate(const EpisodeLog& log, double dt);

}  // namespace gapnp::sim
