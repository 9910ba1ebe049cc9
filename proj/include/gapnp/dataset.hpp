#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "gapnp/episode.hpp"
#include "gapnp/model.hpp"
#include "gapnp/track.hpp"

namespace gapnp::data {

inline constexpr int kLogSchema = 1;

/// One expert step. `delta_next` is the command issued at step k.
struct DriveRecord {
    std::size_t k = 0;
    std::vector<double> zeta;  ///< binned scan, metres
    double v = 0.0;
    double omega = 0.0;
    double delta_next = 0.0;
    double phi_star = 0.0;

    bool operator==(const DriveRecord&) const = default;
};

struct EpisodeData {
    std::size_t id = 0;
    std::string track;
    bool collided = false;  ///< ended by a collision; kept but flagged
    std::vector<DriveRecord> records;

    bool operator==(const EpisodeData&) const = default;
};

struct DriveLog {
    std::size_t bins = 54;
    double max_range = 10.0;
    double dt = 0.005;
    std::uint64_t seed = 0;
    std::vector<std::string> tracks;
    nlohmann::json provenance = nlohmann::json::object();
    std::vector<EpisodeData> episodes;

    std::size_t record_count() const;
    /// Number of (k-1, k) pairs, i.e. sum of (length - 1).
    std::size_t example_count() const;
};

struct DemoSettings {
    sim::EpisodeConfig episode;  ///< laps_target, jitter and sizes; collision mode is forced to terminate
    ftg::FtgParams expert;
};

/// Drives the FTG expert over every track `episodes_per_track` times. Episode
/// seeds derive from `seed`. Throws DataError if any episode fails to finish
/// its laps for a reason other than a collision, or if a track is never
/// lapped at all.
DriveLog record_demonstrations(const std::vector<sim::TrackMap>& tracks, std::size_t episodes_per_track,
                               std::uint64_t seed, const DemoSettings& settings);

/// Log text format:
///   line 1: JSON header {schema, b, max_range, dt, seed, tracks, provenance}
///   E <id> <track> <collided 0|1> <records>
///   R <k> <v> <omega> <delta_next> <phi_star> <zeta_1> ... <zeta_b>
/// Values are written with six decimals and read back exactly.
void write_log(std::ostream& out, const DriveLog& log);
DriveLog read_log(std::istream& in, const std::string& source_name);
void save_log(const std::filesystem::path& path, const DriveLog& log);
DriveLog load_log(const std::filesystem::path& path);

/// Rounds to the six-decimal grid used by the log.
double quantize(double x);

/// Position of a training pair: target record `k` and its predecessor.
struct ExampleRef {
    std::size_t episode = 0;
    std::size_t target = 0;  ///< index into episodes[episode].records, >= 1
};

/// Every within-episode (k-1, k) pair in log order.
std::vector<ExampleRef> enumerate_examples(const DriveLog& log);

/// Assembles a batch with N_C = N_T = 1. Scans are divided by max_range.
np::ContextTargetBatch make_batch(const DriveLog& log, const std::vector<ExampleRef>& refs);

/// Shuffled, fixed-size batches over a log. Each epoch reshuffles; a trailing
/// partial batch is dropped.
class BatchStream {
public:
    BatchStream(const DriveLog& log, std::size_t batch_size, std::uint64_t seed);

    np::ContextTargetBatch next();
    std::size_t batches_per_epoch() const { return refs_.size() / batch_size_; }
    /// Refs of the current epoch in visiting order.
    const std::vector<ExampleRef>& order() const { return refs_; }

private:
    void reshuffle();

    const DriveLog& log_;
    std::size_t batch_size_;
    std::mt19937_64 rng_;
    std::vector<ExampleRef> refs_;
    std::size_t cursor_ = 0;
};

/// Convenience: all full batches of one shuffled pass.
std::vector<np::ContextTargetBatch> build_batches(const DriveLog& log, std::size_t batch_size, std::uint64_t seed);

struct Split {
    DriveLog train;
    DriveLog eval;
};

/// Splits whole episodes. Episodes from `held_out_tracks` only ever go to
/// eval; the rest are shuffled with `seed` and the first round(ratio * n)
/// go to train.
Split split_train_eval(const DriveLog& log, double ratio, std::uint64_t seed,
                       const std::vector<std::string>& held_out_tracks = {});

/// Fixed evaluation slice: the first `count` examples of a seeded shuffle.
np::ContextTargetBatch eval_slice(const DriveLog& log, std::size_t count, std::uint64_t seed);

}  // namespace gapnp::data
