#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gapnp/episode.hpp"
#include "gapnp/model.hpp"

namespace gapnp {

struct TrainSettings {
    std::size_t steps = 2000;
    std::size_t batch = 100;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t eval_examples = 500;
    std::uint64_t eval_seed = 7;
    std::size_t eval_every = 1;
    double split_ratio = 0.8;
};

struct DataSettings {
    std::vector<std::string> tracks{"oval", "scurve"};
    std::string unseen_track = "pinch_chicane";
    std::size_t episodes = 4;
    std::size_t laps = 1;
    double scan_jitter = 0.02;
    double start_lateral_jitter = 0.3;
    double start_heading_jitter = 0.1;
};

struct RaceSettings {
    std::size_t laps = 5;           ///< one run per lap
    double steer_noise_deg = 0.0;
    double start_lateral_jitter = 0.0;
    double start_heading_jitter = 0.0;
};

/// Every tunable of the pipeline. Serialized into each output for provenance.
struct RunConfig {
    sim::EpisodeConfig episode;     ///< dt, sizes, vehicle, collision protocol
    ftg::FtgParams ftg;
    sim::CbfSettings cbf;
    np::ModelConfig model;
    TrainSettings train;
    DataSettings data;
    RaceSettings race;
    std::uint64_t seed = 0;
    std::string track_dir = "tracks";

    nlohmann::json to_json() const;
    /// Overlays the keys present in `j` onto this config. Unknown keys raise
    /// ConfigError naming the key.
    void merge_json(const nlohmann::json& j);
    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

RunConfig load_config(const std::filesystem::path& path);

/// Flattened "section.key" paths of every knob with its default, in a stable order.
std::vector<std::pair<std::string, std::string>> describe_defaults();

}  // namespace gapnp
