#include "gapnp/config.hpp"

#include <fstream>

#include "gapnp/errors.hpp"

namespace gapnp {

using nlohmann::json;

json RunConfig::to_json() const {
    const auto& e = episode;
    return {
        {"seed", seed},
        {"track_dir", track_dir},
        {"sim",
         {{"dt", e.dt},
          {"max_steps", e.max_steps},
          {"r_car", e.r_car},
          {"beams", e.beams},
          {"bins", e.bins},
          {"max_range", e.max_range},
          {"respawn_penalty", e.respawn_penalty},
          {"stuck_steps", e.stuck_steps},
          {"stuck_distance", e.stuck_distance}}},
        {"vehicle",
         {{"wheelbase", e.vehicle.wheelbase}, {"speed_tau", e.vehicle.speed_tau}, {"max_steer", e.vehicle.max_steer}}},
        {"ftg",
         {{"bubble_radius", ftg.bubble_radius},
          {"gap_threshold", ftg.gap_threshold},
          {"steer_gain", ftg.steer_gain}}},
        {"cbf", {{"alpha", cbf.alpha}, {"d_safe", cbf.d_safe}}},
        {"model", model.to_json()},
        {"train",
         {{"steps", train.steps},
          {"batch", train.batch},
          {"lr", train.lr},
          {"beta1", train.beta1},
          {"beta2", train.beta2},
          {"adam_eps", train.adam_eps},
          {"eval_examples", train.eval_examples},
          {"eval_seed", train.eval_seed},
          {"eval_every", train.eval_every},
          {"split_ratio", train.split_ratio}}},
        {"data",
         {{"tracks", data.tracks},
          {"unseen_track", data.unseen_track},
          {"episodes", data.episodes},
          {"laps", data.laps},
          {"scan_jitter", data.scan_jitter},
          {"start_lateral_jitter", data.start_lateral_jitter},
          {"start_heading_jitter", data.start_heading_jitter}}},
        {"race",
         {{"laps", race.laps},
          {"steer_noise_deg", race.steer_noise_deg},
          {"start_lateral_jitter", race.start_lateral_jitter},
          {"start_heading_jitter", race.start_heading_jitter}}},
    };
}

namespace {

void check_keys(const json& known, const json& patch, const std::string& prefix) {
    if (!patch.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
    for (const auto& [key, value] : patch.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!known.contains(key)) throw ConfigError("unknown config key '" + path + "'");
        if (known[key].is_object()) check_keys(known[key], value, path);
    }
}

template <class T>
void get(const json& j, const char* section, const char* key, T& out) {
    try {
        out = j.at(section).at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key '") + section + "." + key + "' has the wrong type");
    }
}

}  // namespace

void RunConfig::merge_json(const json& patch) {
    json merged = to_json();
    check_keys(merged, patch, "");
    merged.merge_patch(patch);
    try {
        seed = merged.at("seed").get<std::uint64_t>();
        track_dir = merged.at("track_dir").get<std::string>();
    } catch (const json::exception&) {
        throw ConfigError("config keys 'seed'/'track_dir' have the wrong type");
    }
    auto& e = episode;
    get(merged, "sim", "dt", e.dt);
    get(merged, "sim", "max_steps", e.max_steps);
    get(merged, "sim", "r_car", e.r_car);
    get(merged, "sim", "beams", e.beams);
    get(merged, "sim", "bins", e.bins);
    get(merged, "sim", "max_range", e.max_range);
    get(merged, "sim", "respawn_penalty", e.respawn_penalty);
    get(merged, "sim", "stuck_steps", e.stuck_steps);
    get(merged, "sim", "stuck_distance", e.stuck_distance);
    get(merged, "vehicle", "wheelbase", e.vehicle.wheelbase);
    get(merged, "vehicle", "speed_tau", e.vehicle.speed_tau);
    get(merged, "vehicle", "max_steer", e.vehicle.max_steer);
    get(merged, "ftg", "bubble_radius", ftg.bubble_radius);
    get(merged, "ftg", "gap_threshold", ftg.gap_threshold);
    get(merged, "ftg", "steer_gain", ftg.steer_gain);
    get(merged, "cbf", "alpha", cbf.alpha);
    get(merged, "cbf", "d_safe", cbf.d_safe);
    try {
        model = np::ModelConfig::from_json(merged.at("model"));
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("model config: ") + ex.what());
    }
    get(merged, "train", "steps", train.steps);
    get(merged, "train", "batch", train.batch);
    get(merged, "train", "lr", train.lr);
    get(merged, "train", "beta1", train.beta1);
    get(merged, "train", "beta2", train.beta2);
    get(merged, "train", "adam_eps", train.adam_eps);
    get(merged, "train", "eval_examples", train.eval_examples);
    get(merged, "train", "eval_seed", train.eval_seed);
    get(merged, "train", "eval_every", train.eval_every);
    get(merged, "train", "split_ratio", train.split_ratio);
    get(merged, "data", "tracks", data.tracks);
    get(merged, "data", "unseen_track", data.unseen_track);
    get(merged, "data", "episodes", data.episodes);
    get(merged, "data", "laps", data.laps);
    get(merged, "data", "scan_jitter", data.scan_jitter);
    get(merged, "data", "start_lateral_jitter", data.start_lateral_jitter);
    get(merged, "data", "start_heading_jitter", data.start_heading_jitter);
    get(merged, "race", "laps", race.laps);
    get(merged, "race", "steer_noise_deg", race.steer_noise_deg);
    get(merged, "race", "start_lateral_jitter", race.start_lateral_jitter);
    get(merged, "race", "start_heading_jitter", race.start_heading_jitter);
    // Keep the derived copies consistent.
    ftg.max_range = e.max_range;
    ftg.max_steer = e.vehicle.max_steer;
    model.bins = e.bins;
    model.max_steer = e.vehicle.max_steer;
}

void RunConfig::validate() const {
    const auto& e = episode;
    if (!(e.dt > 0.0)) throw ConfigError("sim.dt must be positive");
    if (e.beams == 0 || e.bins == 0 || e.beams % e.bins != 0) throw ConfigError("sim.bins must divide sim.beams");
    if (!(e.max_range > 0.0)) throw ConfigError("sim.max_range must be positive");
    if (!(e.r_car > 0.0)) throw ConfigError("sim.r_car must be positive");
    if (!(e.vehicle.wheelbase > 0.0) || !(e.vehicle.speed_tau > 0.0)) throw ConfigError("vehicle parameters must be positive");
    if (!(e.vehicle.max_steer > 0.0)) throw ConfigError("vehicle.max_steer must be positive");
    if (!(cbf.alpha > 0.0)) throw ConfigError("cbf.alpha must be positive");
    if (!(cbf.d_safe > 0.0 && cbf.d_safe <= 0.1)) throw ConfigError("cbf.d_safe must be in (0, 0.1]");
    if (model.bins != e.bins) throw ConfigError("model.bins must equal sim.bins");
    model.validate();
    if (train.batch == 0) throw ConfigError("train.batch must be positive");
    if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
    if (train.eval_examples == 0 || train.eval_every == 0) throw ConfigError("train.eval_examples and train.eval_every must be positive");
    if (!(train.split_ratio > 0.0 && train.split_ratio < 1.0)) throw ConfigError("train.split_ratio must be in (0, 1)");
    if (data.tracks.empty()) throw ConfigError("data.tracks must not be empty");
    if (race.laps == 0) throw ConfigError("race.laps must be positive");
    if (!(race.steer_noise_deg >= 0.0)) throw ConfigError("race.steer_noise_deg must be non-negative");
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    RunConfig cfg;
    cfg.merge_json(j);
    cfg.validate();
    return cfg;
}

std::vector<std::pair<std::string, std::string>> describe_defaults() {
    std::vector<std::pair<std::string, std::string>> out;
    const json j = RunConfig{}.to_json();
    for (const auto& [key, value] : j.items()) {
        if (value.is_object()) {
            for (const auto& [sub, v] : value.items()) out.emplace_back(key + "." + sub, v.dump());
        } else {
            out.emplace_back(key, value.dump());
        }
    }
    return out;
}

}  // namespace gapnp
