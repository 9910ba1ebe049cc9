#include "gapnp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "gapnp/errors.hpp"

namespace gapnp::data {

double quantize(double x) { return std::round(x * 1e6) / 1e6; }

std::size_t DriveLog::record_count() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.records.size();
    return n;
}

std::size_t DriveLog::example_count() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.records.empty() ? 0 : e.records.size() - 1;
    return n;
}

DriveLog record_demonstrations(const std::vector<sim::TrackMap>& tracks, std::size_t episodes_per_track,
                               std::uint64_t seed, const DemoSettings& settings) {
    if (tracks.empty()) throw ConfigError("record_demonstrations: no tracks");
    if (episodes_per_track == 0) throw ConfigError("record_demonstrations: episodes must be positive");

    DriveLog log;
    log.bins = settings.episode.bins;
    log.max_range = settings.episode.max_range;
    log.dt = settings.episode.dt;
    log.seed = seed;

    std::mt19937_64 seeds(seed);
    std::size_t next_id = 0;
    for (const auto& map : tracks) {
        log.tracks.push_back(map.name);
        std::size_t clean = 0;
        for (std::size_t e = 0; e < episodes_per_track; ++e) {
            sim::EpisodeConfig cfg = settings.episode;
            cfg.on_collision = sim::CollisionMode::terminate;
            cfg.cbf.reset();
            cfg.steer_noise_std = 0.0;
            cfg.record_steps = true;
            cfg.seed = seeds();
            sim::FtgPolicy expert(settings.expert);
            const sim::EpisodeLog run = sim::run_episode(expert, map, cfg);

            EpisodeData ep;
            ep.id = next_id++;
            ep.track = map.name;
            ep.collided = run.termination == sim::Termination::collision;
            if (!ep.collided && run.termination != sim::Termination::laps_completed) {
                throw DataError("expert failed on track '" + map.name + "' (episode " + std::to_string(e) +
                                ", " + sim::to_string(run.termination) + "): " + run.diagnostic);
            }
            if (!ep.collided) ++clean;
            ep.records.reserve(run.steps.size());
            for (const auto& s : run.steps) {
                DriveRecord r;
                r.k = s.k;
                r.zeta.reserve(s.binned.size());
                for (double z : s.binned) r.zeta.push_back(quantize(z));
                r.v = quantize(s.state.v);
                r.omega = quantize(s.state.omega);
                r.delta_next = quantize(s.steering);
                r.phi_star = quantize(s.phi_star);
                ep.records.push_back(std::move(r));
            }
            log.episodes.push_back(std::move(ep));
        }
        if (clean == 0) throw DataError("expert never completed a lap on track '" + map.name + "'");
    }
    return log;
}

// ---------------------------------------------------------------------------

namespace {

void put(std::string& line, double x) {
    char buf[48];
    std::snprintf(buf, sizeof buf, " %.6f", x);
    line += buf;
}

}  // namespace

void write_log(std::ostream& out, const DriveLog& log) {
    const nlohmann::json header = {{"schema", kLogSchema}, {"b", log.bins},         {"max_range", log.max_range},
                                   {"dt", log.dt},         {"seed", log.seed},      {"tracks", log.tracks},
                                   {"provenance", log.provenance}};
    out << header.dump() << '\n';
    std::string line;
    for (const auto& ep : log.episodes) {
        out << "E " << ep.id << ' ' << ep.track << ' ' << (ep.collided ? 1 : 0) << ' ' << ep.records.size() << '\n';
        for (const auto& r : ep.records) {
            if (r.zeta.size() != log.bins) throw DimensionError("write_log: record has the wrong bin count");
            line = "R " + std::to_string(r.k);
            put(line, r.v);
            put(line, r.omega);
            put(line, r.delta_next);
            put(line, r.phi_star);
            for (double z : r.zeta) put(line, z);
            line += '\n';
            out << line;
        }
    }
    if (!out) throw std::runtime_error("write_log: write failed");
}

DriveLog read_log(std::istream& in, const std::string& source) {
    DriveLog log;
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line)) throw ParseError(source, 1, "empty log");
    try {
        const auto header = nlohmann::json::parse(line);
        if (header.at("schema").get<int>() != kLogSchema) {
            throw ParseError(source, 1, "unsupported schema " + header.at("schema").dump());
        }
        log.bins = header.at("b").get<std::size_t>();
        log.max_range = header.at("max_range").get<double>();
        log.dt = header.at("dt").get<double>();
        log.seed = header.at("seed").get<std::uint64_t>();
        log.tracks = header.at("tracks").get<std::vector<std::string>>();
        log.provenance = header.value("provenance", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(source, 1, std::string("bad header: ") + e.what());
    }

    std::size_t expected = 0;
    auto close_episode = [&](std::size_t at) {
        if (!log.episodes.empty() && log.episodes.back().records.size() != expected) {
            throw ParseError(source, at, "episode " + std::to_string(log.episodes.back().id) + " declares " +
                                             std::to_string(expected) + " records, found " +
                                             std::to_string(log.episodes.back().records.size()));
        }
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "E") {
            close_episode(lineno);
            EpisodeData ep;
            int collided = 0;
            if (!(ss >> ep.id >> ep.track >> collided >> expected) || (collided != 0 && collided != 1)) {
                throw ParseError(source, lineno, "malformed episode line");
            }
            ep.collided = collided == 1;
            ep.records.reserve(expected);
            log.episodes.push_back(std::move(ep));
        } else if (tag == "R") {
            if (log.episodes.empty()) throw ParseError(source, lineno, "record before any episode line");
            DriveRecord r;
            if (!(ss >> r.k >> r.v >> r.omega >> r.delta_next >> r.phi_star)) {
                throw ParseError(source, lineno, "malformed record");
            }
            r.zeta.resize(log.bins);
            for (double& z : r.zeta) {
                if (!(ss >> z)) throw ParseError(source, lineno, "record has fewer than " + std::to_string(log.bins) + " bins");
            }
            std::string extra;
            if (ss >> extra) throw ParseError(source, lineno, "record has more than " + std::to_string(log.bins) + " bins");
            log.episodes.back().records.push_back(std::move(r));
        } else {
            throw ParseError(source, lineno, "unknown line tag '" + tag + "'");
        }
    }
    close_episode(lineno);
    return log;
}

void save_log(const std::filesystem::path& path, const DriveLog& log) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_log(out, log);
}

DriveLog load_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return read_log(in, path.string());
}

// ---------------------------------------------------------------------------

std::vector<ExampleRef> enumerate_examples(const DriveLog& log) {
    std::vector<ExampleRef> refs;
    refs.reserve(log.example_count());
    for (std::size_t e = 0; e < log.episodes.size(); ++e) {
        for (std::size_t t = 1; t < log.episodes[e].records.size(); ++t) refs.push_back({e, t});
    }
    return refs;
}

np::ContextTargetBatch make_batch(const DriveLog& log, const std::vector<ExampleRef>& refs) {
    if (refs.empty()) throw DataError("make_batch: no examples");
    const std::size_t b = log.bins, w = b + 2, n = refs.size();
    np::ContextTargetBatch batch;
    batch.examples = n;
    batch.x_context = Tensor({n, w});
    batch.y_context = Tensor({n, 1});
    batch.x_target = Tensor({n, w});
    batch.y_target = Tensor({n, 1});
    batch.prior = Tensor({n, 1});
    auto fill = [&](Tensor& x, std::size_t row, const DriveRecord& r) {
        for (std::size_t j = 0; j < b; ++j) x.at(row, j) = r.zeta[j] / log.max_range;
        x.at(row, b) = r.v;
        x.at(row, b + 1) = r.omega;
    };
    for (std::size_t i = 0; i < n; ++i) {
        const auto& recs = log.episodes.at(refs[i].episode).records;
        if (refs[i].target == 0 || refs[i].target >= recs.size()) throw ContractError("make_batch: bad example ref");
        const DriveRecord& c = recs[refs[i].target - 1];
        const DriveRecord& t = recs[refs[i].target];
        fill(batch.x_context, i, c);
        batch.y_context[i] = c.delta_next;
        fill(batch.x_target, i, t);
        batch.y_target[i] = t.delta_next;
        batch.prior[i] = t.phi_star;
    }
    return batch;
}

BatchStream::BatchStream(const DriveLog& log, std::size_t batch_size, std::uint64_t seed)
    : log_(log), batch_size_(batch_size), rng_(seed), refs_(enumerate_examples(log)) {
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (refs_.empty()) throw DataError("log has no consecutive record pairs");
    if (refs_.size() < batch_size) {
        throw DataError("log has " + std::to_string(refs_.size()) + " examples, fewer than one batch of " +
                        std::to_string(batch_size));
    }
    reshuffle();
}

void BatchStream::reshuffle() {
    std::shuffle(refs_.begin(), refs_.end(), rng_);
    cursor_ = 0;
}

np::ContextTargetBatch BatchStream::next() {
    if (cursor_ + batch_size_ > refs_.size()) reshuffle();
    const std::vector<ExampleRef> chunk(refs_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                        refs_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size_));
    cursor_ += batch_size_;
    return make_batch(log_, chunk);
}

std::vector<np::ContextTargetBatch> build_batches(const DriveLog& log, std::size_t batch_size, std::uint64_t seed) {
    if (log.example_count() == 0) throw DataError("build_batches: empty log");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    std::vector<ExampleRef> refs = enumerate_examples(log);
    std::mt19937_64 rng(seed);
    std::shuffle(refs.begin(), refs.end(), rng);
    std::vector<np::ContextTargetBatch> out;
    for (std::size_t i = 0; i + batch_size <= refs.size(); i += batch_size) {
        out.push_back(make_batch(log, {refs.begin() + static_cast<std::ptrdiff_t>(i),
                                       refs.begin() + static_cast<std::ptrdiff_t>(i + batch_size)}));
    }
    return out;
}

Split split_train_eval(const DriveLog& log, double ratio, std::uint64_t seed,
                       const std::vector<std::string>& held_out_tracks) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must be in (0, 1)");
    if (log.episodes.size() < 2) throw DataError("split needs at least 2 episodes");

    Split split;
    for (DriveLog* part : {&split.train, &split.eval}) {
        part->bins = log.bins;
        part->max_range = log.max_range;
        part->dt = log.dt;
        part->seed = log.seed;
        part->tracks = log.tracks;
        part->provenance = log.provenance;
    }
    std::vector<std::size_t> pool;
    for (std::size_t e = 0; e < log.episodes.size(); ++e) {
        const bool held = std::find(held_out_tracks.begin(), held_out_tracks.end(), log.episodes[e].track) !=
                          held_out_tracks.end();
        if (held) split.eval.episodes.push_back(log.episodes[e]);
        else pool.push_back(e);
    }
    std::mt19937_64 rng(seed);
    std::shuffle(pool.begin(), pool.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(pool.size())));
    std::vector<std::size_t> train_ids(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> eval_ids(pool.begin() + static_cast<std::ptrdiff_t>(n_train), pool.end());
    std::sort(train_ids.begin(), train_ids.end());
    std::sort(eval_ids.begin(), eval_ids.end());
    for (std::size_t e : train_ids) split.train.episodes.push_back(log.episodes[e]);
    for (std::size_t e : eval_ids) split.eval.episodes.push_back(log.episodes[e]);
    return split;
}

np::ContextTargetBatch eval_slice(const DriveLog& log, std::size_t count, std::uint64_t seed) {
    std::vector<ExampleRef> refs = enumerate_examples(log);
    if (refs.empty()) throw DataError("eval_slice: no examples");
    std::mt19937_64 rng(seed);
    std::shuffle(refs.begin(), refs.end(), rng);
    refs.resize(std::min(count, refs.size()));
    return make_batch(log, refs);
}

}  // namespace gapnp::data
