#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gapnp/config.hpp"
#include "gapnp/dataset.hpp"
#include "gapnp/episode.hpp"
#include "gapnp/model.hpp"

namespace gapnp::eval {

// --- training ---------------------------------------------------------------

struct ConvergencePoint {
    std::size_t step = 0;
    double loss = 0.0;  ///< training minibatch loss of this step (eval NLL at step 0)
    double mae = 0.0;   ///< held-out MAE, prior-mean latent
    double nll = 0.0;   ///< held-out per-point NLL, prior-mean latent
};

struct TrainRun {
    std::string model;
    std::uint64_t seed = 0;
    std::vector<ConvergencePoint> series;  ///< step 0 (initial) then one point per evaluated step
    bool failed = false;
    std::string failure;

    double min_mae() const;
    double min_nll() const;
    const ConvergencePoint& final_point() const { return series.back(); }
};

struct EvalMetrics {
    double mae = 0.0;
    double nll = 0.0;
};

/// Deterministic held-out metrics (z = prior mean, no gradients).
EvalMetrics evaluate(const np::Model& model, const np::ContextTargetBatch& batch);

using ProgressFn = std::function<void(const ConvergencePoint&)>;

/// Trains one model with Adam. A non-finite loss stops the run with
/// failed = true; the series keeps the points recorded so far.
TrainRun train_model(np::Model& model, const data::DriveLog& train, const np::ContextTargetBatch& eval_batch,
                     std::uint64_t seed, const TrainSettings& settings, const ProgressFn& progress = {});

struct ConvergenceReport {
    std::vector<TrainRun> runs;
};

/// Trains every model config once per seed. Model parameters are initialised
/// from the seed; batches are shuffled from the same seed.
ConvergenceReport run_convergence(const std::vector<np::ModelConfig>& models, const data::DriveLog& train,
                                  const data::DriveLog& held_out, const std::vector<std::uint64_t>& seeds,
                                  const TrainSettings& settings, const ProgressFn& progress = {});

// --- policies ---------------------------------------------------------------

/// Learned steering policy. Keeps the previous observation as its single
/// context pair; on the first step the current observation stands in.
class NpPolicy final : public sim::SteeringPolicy {
public:
    NpPolicy(std::shared_ptr<const np::Model> model, double max_range, std::string label = "");
    std::string name() const override { return label_; }
    void reset() override;
    double steer(const sim::Observation& obs) override;

private:
    std::shared_ptr<const np::Model> model_;
    double max_range_;
    std::string label_;
    std::vector<double> previous_;
    bool have_previous_ = false;
};

// --- races ------------------------------------------------------------------

struct RaceRow {
    std::string policy;
    bool cbf = false;
    std::size_t runs = 0;
    std::size_t laps_completed = 0;
    std::size_t incomplete_runs = 0;
    double ttf_mean = 0.0;            ///< s, mean over completed laps (NaN when none)
    double collisions_per_run = 0.0;
    double steering_rate = 0.0;       ///< rad/s
    double latency_mean_ms = 0.0;     ///< policy + filter per control step
    double latency_std_ms = 0.0;
    double filter_latency_mean_ms = 0.0;
    double filter_latency_std_ms = 0.0;
    double feasible_fraction = 1.0;   ///< of filtered steps
    double certificate_violation_fraction = 0.0;  ///< of feasible consecutive steps
    double box_violation_fraction = 0.0;
    std::size_t steps = 0;
};

struct RaceReport {
    std::vector<RaceRow> rows;
};

struct RaceOptions {
    sim::EpisodeConfig episode;  ///< per-run config; laps_target forced to 1
    std::size_t runs = 5;
    bool cbf = false;
    sim::CbfSettings cbf_settings;
    std::uint64_t seed = 0;
};

using PolicyFactory = std::function<std::unique_ptr<sim::SteeringPolicy>()>;

/// Runs `runs` one-lap episodes and aggregates the race metrics.
RaceRow run_races(const PolicyFactory& make_policy, const sim::TrackMap& track, const RaceOptions& options,
                  std::vector<sim::EpisodeLog>* logs = nullptr);

/// Statistics from the records of one filtered episode.
struct CertificateStats {
    std::size_t filtered = 0;
    std::size_t feasible = 0;
    std::size_t certified_pairs = 0;
    std::size_t violations = 0;
    std::size_t box_violations = 0;
};
CertificateStats certificate_stats(const sim::EpisodeLog& log, double dt, double alpha, double max_steer,
                                   double tol = 1e-6);

// --- reports ----------------------------------------------------------------

void write_convergence_csv(std::ostream& out, const ConvergenceReport& report);
ConvergenceReport read_convergence_csv(std::istream& in, const std::string& source);
void write_convergence_table(std::ostream& out, const ConvergenceReport& report);

void write_race_csv(std::ostream& out, const RaceReport& report);
RaceReport read_race_csv(std::istream& in, const std::string& source);
void write_race_table(std::ostream& out, const RaceReport& report);

/// Writes <stem>.csv, <stem>.txt and <stem>.config.json under `dir`.
void emit_report(const ConvergenceReport& report, const std::filesystem::path& dir, const std::string& stem,
                 const nlohmann::json& provenance);
void emit_report(const RaceReport& report, const std::filesystem::path& dir, const std::string& stem,
                 const nlohmann::json& provenance);

}  // namespace gapnp::eval
