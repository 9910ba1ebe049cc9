// gapnp: data generation, training, racing and filter inspection.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include <CLI11.hpp>

#include "gapnp/cbf.hpp"
#include "gapnp/checkpoint.hpp"
#include "gapnp/config.hpp"
#include "gapnp/dataset.hpp"
#include "gapnp/errors.hpp"
#include "gapnp/eval.hpp"
#include "gapnp/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gapnp;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string knob_footer() {
    std::ostringstream out;
    out << "\nConfig knobs (--config FILE, --set KEY=VALUE; CLI > file > default):\n";
    for (const auto& [key, value] : describe_defaults()) out << "  " << key << " = " << value << '\n';
    return out.str();
}

/// Parses "a.b=value" into a nested JSON patch. Values are read as JSON,
/// falling back to a plain string.
json set_patch(const std::vector<std::string>& sets) {
    json patch = json::object();
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--set expects KEY=VALUE, got '" + s + "'");
        const std::string key = s.substr(0, eq), raw = s.substr(eq + 1);
        json value = json::parse(raw, nullptr, false);
        if (value.is_discarded()) value = raw;
        json* node = &patch;
        std::size_t start = 0;
        while (true) {
            const auto dot = key.find('.', start);
            const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (dot == std::string::npos) {
                (*node)[part] = value;
                break;
            }
            node = &(*node)[part];
            start = dot + 1;
        }
    }
    return patch;
}

struct Common {
    std::string config_path;
    std::vector<std::string> sets;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "JSON config file");
        app->add_option("--set", sets, "Override a config knob, e.g. --set cbf.alpha=3");
        app->footer(knob_footer());
    }

    RunConfig resolve(const std::function<void(json&)>& flags) const {
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        json patch = set_patch(sets);
        flags(patch);
        cfg.merge_json(patch);
        cfg.validate();
        return cfg;
    }
};

std::vector<std::string> split_list(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    for (const auto& item : items) {
        std::stringstream ss(item);
        std::string part;
        while (std::getline(ss, part, ',')) {
            if (!part.empty()) out.push_back(part);
        }
    }
    return out;
}

sim::EpisodeConfig episode_from(const RunConfig& cfg) {
    sim::EpisodeConfig e = cfg.episode;
    e.cbf.reset();
    return e;
}

// --- gen-data ---------------------------------------------------------------

int cmd_gen_data(const Common& common, const std::vector<std::string>& tracks_flag, int episodes, std::uint64_t seed,
                 bool seed_set, const std::string& out) {
    if (episodes <= 0) throw UsageError("--episodes must be positive");
    const RunConfig cfg = common.resolve([&](json& p) {
        if (!tracks_flag.empty()) p["data"]["tracks"] = split_list(tracks_flag);
        p["data"]["episodes"] = episodes;
        if (seed_set) p["seed"] = seed;
    });
    std::vector<sim::TrackMap> tracks;
    for (const auto& name : cfg.data.tracks) tracks.push_back(load_named_track(name, cfg.track_dir));

    data::DemoSettings demo;
    demo.episode = episode_from(cfg);
    demo.episode.laps_target = cfg.data.laps;
    demo.episode.scan_jitter = cfg.data.scan_jitter;
    demo.episode.start_lateral_jitter = cfg.data.start_lateral_jitter;
    demo.episode.start_heading_jitter = cfg.data.start_heading_jitter;
    demo.expert = cfg.ftg;
    data::DriveLog log = data::record_demonstrations(tracks, cfg.data.episodes, cfg.seed, demo);
    log.provenance = cfg.to_json();
    data::save_log(out, log);
    std::size_t collided = 0;
    for (const auto& e : log.episodes) collided += e.collided ? 1 : 0;
    std::printf("wrote %s: %zu episodes, %zu records, %zu collision-terminated\n", out.c_str(), log.episodes.size(),
                log.record_count(), collided);
    return 0;
}

// --- train ------------------------------------------------------------------

int cmd_train(const Common& common, const std::string& model_name, const std::string& data_path, int steps,
              bool steps_set, std::uint64_t seed, bool seed_set, const std::string& out, bool quiet) {
    np::ModelKind kind;
    try {
        kind = np::parse_model_kind(model_name);
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    if (steps_set && steps < 0) throw UsageError("--steps must be non-negative");
    const RunConfig cfg = common.resolve([&](json& p) {
        p["model"]["kind"] = model_name;
        if (steps_set) p["train"]["steps"] = steps;
        if (seed_set) p["seed"] = seed;
    });
    (void)kind;
    const data::DriveLog log = data::load_log(data_path);
    if (log.bins != cfg.episode.bins) {
        throw ConfigError("log has " + std::to_string(log.bins) + " bins, config expects " +
                          std::to_string(cfg.episode.bins));
    }
    const data::Split split =
        data::split_train_eval(log, cfg.train.split_ratio, cfg.seed, {cfg.data.unseen_track});
    if (split.eval.example_count() == 0) throw DataError("evaluation split is empty");
    const np::ContextTargetBatch eval_batch =
        data::eval_slice(split.eval, cfg.train.eval_examples, cfg.train.eval_seed);

    np::Model model(cfg.model, cfg.seed);
    eval::ProgressFn progress;
    if (!quiet) {
        progress = [](const eval::ConvergencePoint& p) {
            if (p.step % 100 == 0) std::fprintf(stderr, "step %5zu  loss %10.5f  mae %.5f  nll %.4f\n", p.step, p.loss, p.mae, p.nll);
        };
    }
    eval::ConvergenceReport report;
    report.runs.push_back(eval::train_model(model, split.train, eval_batch, cfg.seed, cfg.train, progress));
    const eval::TrainRun& run = report.runs.back();

    fs::create_directories(out);
    ad::Checkpoint ck;
    ck.params = model.params();
    ck.seed = cfg.seed;
    ck.step = run.final_point().step;
    ck.metadata = {{"model", cfg.model.to_json()},
                   {"config", cfg.to_json()},
                   {"final_eval", {{"mae", run.final_point().mae}, {"nll", run.final_point().nll}}}};
    const std::string stem = np::to_string(cfg.model.kind);
    ad::save_checkpoint(fs::path(out) / (stem + ".ckpt"), ck);
    eval::emit_report(report, out, stem + "_convergence", cfg.to_json());
    write_convergence_table(std::cout, report);
    if (run.failed) {
        std::fprintf(stderr, "training diverged: %s\n", run.failure.c_str());
        return kExitData;
    }
    return 0;
}

// --- race -------------------------------------------------------------------

std::shared_ptr<const np::Model> load_model(const std::string& path, const std::string& expected) {
    ad::Checkpoint ck = ad::load_checkpoint(path);
    if (!ck.metadata.contains("model")) throw ad::CheckpointError(path + ": missing model header");
    const np::ModelConfig mc = np::ModelConfig::from_json(ck.metadata.at("model"));
    if (np::to_string(mc.kind) != expected) {
        throw ConfigError(path + " holds a " + np::to_string(mc.kind) + " model, not " + expected);
    }
    return std::make_shared<const np::Model>(mc, std::move(ck.params));
}

int cmd_race(const Common& common, const std::string& policy, const std::string& ckpt, const std::string& track_name,
             int laps, bool laps_set, const std::string& cbf_flag, double noise_deg, bool noise_set,
             std::uint64_t seed, bool seed_set, const std::string& out) {
    if (policy != "ftg" && policy != "pi-attnp" && policy != "attnp" && policy != "res-mlp") {
        throw UsageError("unknown --policy '" + policy + "' (valid: ftg, pi-attnp, attnp, res-mlp)");
    }
    if (policy != "ftg" && ckpt.empty()) throw UsageError("--policy " + policy + " requires --ckpt");
    if (cbf_flag != "on" && cbf_flag != "off") throw UsageError("--cbf must be 'on' or 'off'");
    if (laps_set && laps <= 0) throw UsageError("--laps must be positive");
    const RunConfig cfg = common.resolve([&](json& p) {
        if (laps_set) p["race"]["laps"] = laps;
        if (noise_set) p["race"]["steer_noise_deg"] = noise_deg;
        if (seed_set) p["seed"] = seed;
    });
    const sim::TrackMap track =
        load_named_track(track_name.empty() ? cfg.data.unseen_track : track_name, cfg.track_dir);

    eval::PolicyFactory factory;
    if (policy == "ftg") {
        factory = [&] { return std::make_unique<sim::FtgPolicy>(cfg.ftg); };
    } else {
        auto model = load_model(ckpt, policy);
        factory = [model, &cfg] { return std::make_unique<eval::NpPolicy>(model, cfg.episode.max_range); };
    }
    eval::RaceOptions opt;
    opt.episode = episode_from(cfg);
    opt.episode.steer_noise_std = cfg.race.steer_noise_deg * std::numbers::pi / 180.0;
    opt.episode.start_lateral_jitter = cfg.race.start_lateral_jitter;
    opt.episode.start_heading_jitter = cfg.race.start_heading_jitter;
    opt.runs = cfg.race.laps;
    opt.cbf = cbf_flag == "on";
    opt.cbf_settings = cfg.cbf;
    opt.seed = cfg.seed;

    std::vector<sim::EpisodeLog> logs;
    eval::RaceReport report;
    report.rows.push_back(eval::run_races(factory, track, opt, &logs));

    fs::create_directories(out);
    const std::string stem = "race_" + report.rows.back().policy;
    eval::emit_report(report, out, stem, cfg.to_json());
    // Timing-free per-run outcomes; identical across runs with the same seed.
    std::ofstream runs(fs::path(out) / (stem + "_runs.csv"), std::ios::binary);
    if (!runs) throw std::runtime_error("cannot write run summary in " + out);
    runs << "run,termination,laps,lap_time_s,collisions,steps,steering_rate_rad_s";
    if (opt.cbf) runs << ",filtered_steps,feasible_steps,certified_pairs,certificate_violations,box_violations";
    runs << '\n';
    char buf[64];
    for (std::size_t r = 0; r < logs.size(); ++r) {
        const auto& lg = logs[r];
        std::snprintf(buf, sizeof buf, "%.17g", lg.lap_times.empty() ? std::nan("") : lg.lap_times.front());
        runs << r << ',' << sim::to_string(lg.termination) << ',' << lg.laps_completed << ',' << buf << ','
             << lg.collisions << ',' << lg.total_steps << ',';
        std::snprintf(buf, sizeof buf, "%.17g", sim::mean_steering_rate(lg, opt.episode.dt));
        runs << buf;
        if (opt.cbf) {
            const auto c = eval::certificate_stats(lg, opt.episode.dt, cfg.cbf.alpha, cfg.episode.vehicle.max_steer);
            runs << ',' << c.filtered << ',' << c.feasible << ',' << c.certified_pairs << ',' << c.violations << ','
                 << c.box_violations;
        }
        runs << '\n';
    }
    write_race_table(std::cout, report);
    return 0;
}

// --- filter-demo ------------------------------------------------------------

int cmd_filter_demo(const Common& common, const std::string& scan_file, double delta_raw, double v, double alpha,
                    bool alpha_set) {
    const RunConfig cfg = common.resolve([&](json& p) {
        if (alpha_set) p["cbf"]["alpha"] = alpha;
    });
    const sim::Scan scan = load_scan(scan_file, cfg.episode.max_range);
    const cbf::SafetyValue sv = cbf::safety_value(scan, cfg.cbf.d_safe);
    cbf::SafetyContext ctx;
    ctx.d_phi = sv.d_phi;
    ctx.phi = sv.phi;
    ctx.v = v;
    ctx.wheelbase = cfg.episode.vehicle.wheelbase;
    ctx.d_safe = cfg.cbf.d_safe;
    ctx.alpha = cfg.cbf.alpha;
    ctx.max_steer = cfg.episode.vehicle.max_steer;
    const cbf::FilterResult r = cbf::filter_steering(delta_raw, ctx);
    std::printf("beams       %zu\n", scan.size());
    std::printf("d_phi       %.9f\n", sv.d_phi);
    std::printf("phi         %.9f\n", sv.phi);
    std::printf("h           %.9f\n", r.h);
    std::printf("lf          %.9f\n", r.lf);
    std::printf("lg          %.9f\n", r.lg);
    std::printf("delta_raw   %.9f\n", delta_raw);
    std::printf("delta_star  %.9f\n", r.steering);
    std::printf("feasible    %s\n", r.feasible ? "true" : "false");
    std::printf("active      %s\n", r.active ? "true" : "false");
    std::printf("clamped     %s\n", r.clamped_input ? "true" : "false");
    std::printf("residual    %.9f\n", r.residual(ctx.alpha));
    return 0;
}

// --- make-tracks ------------------------------------------------------------

int cmd_make_tracks(const std::string& out) {
    fs::create_directories(out);
    for (const auto& map : {sim::make_oval_track(), sim::make_scurve_track(), sim::make_pinch_chicane_track()}) {
        sim::validate_track(map);
        const fs::path path = fs::path(out) / (map.name + ".track");
        sim::save_track(path, map);
        std::printf("wrote %s (centerline %.1f m)\n", path.c_str(), map.centerline_length());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gap-prior neural-process steering: data, training, racing and CBF filtering"};
    app.require_subcommand(1);

    Common c_gen, c_train, c_race, c_filter;

    auto* gen = app.add_subcommand("gen-data", "Record FTG expert demonstrations");
    std::vector<std::string> gen_tracks;
    int gen_episodes = 4;
    std::uint64_t gen_seed = 0;
    std::string gen_out = "demos.log";
    gen->add_option("--tracks", gen_tracks, "Training track names (comma separated) [oval,scurve]");
    gen->add_option("--episodes", gen_episodes, "Episodes per track")->capture_default_str();
    auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "Random seed [0]");
    gen->add_option("--out", gen_out, "Output log path")->capture_default_str();
    c_gen.attach(gen);

    auto* train = app.add_subcommand("train", "Train one model on a demonstration log");
    std::string train_model = "pi-attnp", train_data = "demos.log", train_out = "runs";
    int train_steps = 2000;
    std::uint64_t train_seed = 0;
    bool train_quiet = false;
    train->add_option("--model", train_model, "pi-attnp | attnp | res-mlp")->capture_default_str();
    train->add_option("--data", train_data, "Demonstration log")->capture_default_str();
    auto* train_steps_opt = train->add_option("--steps", train_steps, "Training steps [2000]");
    auto* train_seed_opt = train->add_option("--seed", train_seed, "Random seed [0]");
    train->add_option("--out", train_out, "Output directory")->capture_default_str();
    train->add_flag("--quiet", train_quiet, "No progress output");
    c_train.attach(train);

    auto* race = app.add_subcommand("race", "Race one policy on a track");
    std::string race_policy = "ftg", race_ckpt, race_track, race_cbf = "off", race_out = "runs";
    int race_laps = 5;
    double race_noise = 0.0;
    std::uint64_t race_seed = 0;
    race->add_option("--policy", race_policy, "ftg | pi-attnp | attnp | res-mlp")->capture_default_str();
    race->add_option("--ckpt", race_ckpt, "Checkpoint for learned policies");
    race->add_option("--track", race_track, "Track name [data.unseen_track]");
    auto* race_laps_opt = race->add_option("--laps", race_laps, "Recorded one-lap runs [5]");
    race->add_option("--cbf", race_cbf, "on | off")->capture_default_str();
    auto* race_noise_opt = race->add_option("--noise-deg", race_noise, "Uniform steering noise std, degrees [0]");
    auto* race_seed_opt = race->add_option("--seed", race_seed, "Random seed [0]");
    race->add_option("--out", race_out, "Output directory")->capture_default_str();
    c_race.attach(race);

    auto* filter = app.add_subcommand("filter-demo", "Apply the CBF filter to one scan");
    std::string filter_scan;
    double filter_delta = 0.0, filter_v = 3.0, filter_alpha = 2.0;
    filter->add_option("--scan-file", filter_scan, "Lines of 'angle distance'")->required();
    filter->add_option("--delta-raw", filter_delta, "Raw steering command, rad")->required();
    filter->add_option("--v", filter_v, "Speed, m/s")->capture_default_str();
    auto* filter_alpha_opt = filter->add_option("--alpha", filter_alpha, "Class-K gain [2.0]");
    c_filter.attach(filter);

    auto* tracks = app.add_subcommand("make-tracks", "Write the bundled track files");
    std::string tracks_out = "tracks";
    tracks->add_option("--out", tracks_out, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*gen) return cmd_gen_data(c_gen, gen_tracks, gen_episodes, gen_seed, gen_seed_opt->count() > 0, gen_out);
        if (*train) {
            return cmd_train(c_train, train_model, train_data, train_steps, train_steps_opt->count() > 0, train_seed,
                             train_seed_opt->count() > 0, train_out, train_quiet);
        }
        if (*race) {
            return cmd_race(c_race, race_policy, race_ckpt, race_track, race_laps, race_laps_opt->count() > 0,
                            race_cbf, race_noise, race_noise_opt->count() > 0, race_seed,
                            race_seed_opt->count() > 0, race_out);
        }
        if (*filter) {
            return cmd_filter_demo(c_filter, filter_scan, filter_delta, filter_v, filter_alpha,
                                   filter_alpha_opt->count() > 0);
        }
        if (*tracks) return cmd_make_tracks(tracks_out);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitData;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return kExitData;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const ad::CheckpointError& e) {
        std::fprintf(stderr, "checkpoint error: %s\n", e.what());
        return kExitData;
    } catch (const std::runtime_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kExitInternal;
    }
    return kExitInternal;
}
