#include "gapnp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "gapnp/errors.hpp"
#include "gapnp/optim.hpp"

namespace gapnp::eval {

double TrainRun::min_mae() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& p : series) m = std::min(m, p.mae);
    return m;
}

double TrainRun::min_nll() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& p : series) m = std::min(m, p.nll);
    return m;
}

EvalMetrics evaluate(const np::Model& model, const np::ContextTargetBatch& batch) {
    ad::Graph g(false);
    const np::LossTerms t = model.loss(g, batch, np::LatentMode::prior_mean, nullptr);
    return {t.mae, t.nll};
}

TrainRun train_model(np::Model& model, const data::DriveLog& train, const np::ContextTargetBatch& eval_batch,
                     std::uint64_t seed, const TrainSettings& settings, const ProgressFn& progress) {
    TrainRun run;
    run.model = np::to_string(model.config().kind);
    run.seed = seed;

    const EvalMetrics initial = evaluate(model, eval_batch);
    run.series.push_back({0, initial.nll, initial.mae, initial.nll});
    if (progress) progress(run.series.back());
    if (settings.steps == 0) return run;

    data::BatchStream stream(train, settings.batch, seed);
    ad::Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    ad::AdamState adam;
    adam.config = {settings.lr, settings.beta1, settings.beta2, settings.adam_eps};
    const np::LatentMode mode = model.config().kind == np::ModelKind::res_mlp ? np::LatentMode::prior_mean
                                                                                : np::LatentMode::posterior_sample;
    for (std::size_t step = 1; step <= settings.steps; ++step) {
        const np::ContextTargetBatch batch = stream.next();
        double loss_value = 0.0;
        try {
            ad::Graph g;
            const np::LossTerms terms = model.loss(g, batch, mode, rng);
            loss_value = terms.loss_value;
            if (!std::isfinite(loss_value)) throw NumericError("non-finite loss");
            g.backward(terms.loss);
            ad::adam_step(model.params(), g.parameter_gradients(), adam);
        } catch (const NumericError& e) {
            run.failed = true;
            run.failure = "step " + std::to_string(step) + ": " + e.what();
            return run;
        }
        if (step % settings.eval_every == 0 || step == settings.steps) {
            const EvalMetrics m = evaluate(model, eval_batch);
            if (!std::isfinite(m.mae) || !std::isfinite(m.nll)) {
                run.failed = true;
                run.failure = "step " + std::to_string(step) + ": non-finite evaluation metrics";
                return run;
            }
            run.series.push_back({step, loss_value, m.mae, m.nll});
            if (progress) progress(run.series.back());
        }
    }
    return run;
}

ConvergenceReport run_convergence(const std::vector<np::ModelConfig>& models, const data::DriveLog& train,
                                  const data::DriveLog& held_out, const std::vector<std::uint64_t>& seeds,
                                  const TrainSettings& settings, const ProgressFn& progress) {
    const np::ContextTargetBatch eval_batch = data::eval_slice(held_out, settings.eval_examples, settings.eval_seed);
    ConvergenceReport report;
    for (const auto& cfg : models) {
        for (std::uint64_t seed : seeds) {
            np::Model model(cfg, seed);
            report.runs.push_back(train_model(model, train, eval_batch, seed, settings, progress));
        }
    }
    return report;
}

// ---------------------------------------------------------------------------

NpPolicy::NpPolicy(std::shared_ptr<const np::Model> model, double max_range, std::string label)
    : model_(std::move(model)), max_range_(max_range), label_(std::move(label)) {
    if (!model_) throw ContractError("NpPolicy: null model");
    if (label_.empty()) label_ = np::to_string(model_->config().kind);
}

void NpPolicy::reset() {
    previous_.clear();
    have_previous_ = false;
}

double NpPolicy::steer(const sim::Observation& obs) {
    const std::size_t b = obs.binned.size();
    std::vector<double> x(b + 2);
    for (std::size_t j = 0; j < b; ++j) x[j] = obs.binned.bins[j] / max_range_;
    x[b] = obs.v;
    x[b + 1] = obs.omega;
    const std::vector<double>& context = have_previous_ ? previous_ : x;
    std::optional<double> prior;
    if (model_->config().prior_enabled()) prior = ftg::gap_prior(obs.binned).phi_star;
    const double delta = model_->predict_steering(context, obs.previous_steering, x, prior);
    previous_ = std::move(x);
    have_previous_ = true;
    return delta;
}

// ---------------------------------------------------------------------------

namespace {

struct Moments {
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;
    void add(double x) {
        sum += x;
        sum_sq += x * x;
        ++n;
    }
    double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    double stddev() const {
        if (n < 2) return 0.0;
        const double m = mean();
        return std::sqrt(std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1)));
    }
};

}  // namespace

CertificateStats certificate_stats(const sim::EpisodeLog& log, double dt, double alpha, double max_steer,
                                   double tol) {
    CertificateStats s;
    for (std::size_t i = 0; i < log.steps.size(); ++i) {
        const sim::StepRecord& r = log.steps[i];
        if (!r.filter) continue;
        ++s.filtered;
        if (std::abs(r.steering) > max_steer) ++s.box_violations;
        if (!r.filter->feasible) continue;
        ++s.feasible;
        if (i + 1 >= log.steps.size() || r.respawned || log.steps[i + 1].k != r.k + 1) continue;
        ++s.certified_pairs;
        if (!cbf::certify_step(r.h, log.steps[i + 1].h, dt, alpha, tol)) ++s.violations;
    }
    return s;
}

RaceRow run_races(const PolicyFactory& make_policy, const sim::TrackMap& track, const RaceOptions& options,
                  std::vector<sim::EpisodeLog>* logs) {
    if (options.runs == 0) throw ConfigError("race: runs must be positive");
    RaceRow row;
    row.cbf = options.cbf;
    row.runs = options.runs;

    std::mt19937_64 seeds(options.seed);
    Moments latency, filter_latency;
    double lap_time_sum = 0.0, rate_sum = 0.0;
    std::size_t collisions = 0;
    CertificateStats cert;
    for (std::size_t r = 0; r < options.runs; ++r) {
        auto policy = make_policy();
        if (r == 0) row.policy = policy->name() + (options.cbf ? "+cbf" : "");
        sim::EpisodeConfig cfg = options.episode;
        cfg.laps_target = 1;
        cfg.record_steps = true;
        cfg.seed = seeds();
        if (options.cbf) cfg.cbf = options.cbf_settings;
        else cfg.cbf.reset();
        sim::EpisodeLog log = sim::run_episode(*policy, track, cfg);

        for (double t : log.lap_times) lap_time_sum += t;
        row.laps_completed += log.lap_times.size();
        if (log.lap_times.empty()) ++row.incomplete_runs;
        collisions += log.collisions;
        rate_sum += sim::mean_steering_rate(log, cfg.dt);
        for (const auto& s : log.steps) {
            const double ft = s.filter ? s.filter->solve_time : 0.0;
            latency.add((s.policy_latency + ft) * 1e3);
            if (s.filter) filter_latency.add(ft * 1e3);
        }
        row.steps += log.steps.size();
        if (options.cbf) {
            const CertificateStats c =
                certificate_stats(log, cfg.dt, options.cbf_settings.alpha, cfg.vehicle.max_steer);
            cert.filtered += c.filtered;
            cert.feasible += c.feasible;
            cert.certified_pairs += c.certified_pairs;
            cert.violations += c.violations;
            cert.box_violations += c.box_violations;
        }
        if (logs) logs->push_back(std::move(log));
    }
    const auto runs = static_cast<double>(options.runs);
    row.ttf_mean = row.laps_completed ? lap_time_sum / static_cast<double>(row.laps_completed)
                                      : std::numeric_limits<double>::quiet_NaN();
    row.collisions_per_run = static_cast<double>(collisions) / runs;
    row.steering_rate = rate_sum / runs;
    row.latency_mean_ms = latency.mean();
    row.latency_std_ms = latency.stddev();
    row.filter_latency_mean_ms = filter_latency.mean();
    row.filter_latency_std_ms = filter_latency.stddev();
    if (cert.filtered) {
        row.feasible_fraction = static_cast<double>(cert.feasible) / static_cast<double>(cert.filtered);
        row.box_violation_fraction = static_cast<double>(cert.box_violations) / static_cast<double>(cert.filtered);
    }
    if (cert.certified_pairs) {
        row.certificate_violation_fraction =
            static_cast<double>(cert.violations) / static_cast<double>(cert.certified_pairs);
    }
    return row;
}

// ---------------------------------------------------------------------------

namespace {

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& source, std::size_t line) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') throw ParseError(source, line, "not a number: '" + s + "'");
    return v;
}

std::uint64_t parse_uint(const std::string& s, const std::string& source, std::size_t line) {
    try {
        std::size_t pos = 0;
        const auto v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(source, line, "not an unsigned integer: '" + s + "'");
    }
}

const char* kConvergenceHeader = "model,seed,step,loss,mae,nll,failed";
const char* kRaceHeader =
    "policy,cbf,ttf_s,collisions_per_run,steering_rate_rad_s,latency_mean_ms,latency_std_ms,"
    "filter_latency_mean_ms,filter_latency_std_ms,feasible_fraction,certificate_violation_fraction,"
    "box_violation_fraction,runs,laps_completed,incomplete_runs,steps";

}  // namespace

void write_convergence_csv(std::ostream& out, const ConvergenceReport& report) {
    out << kConvergenceHeader << '\n';
    for (const auto& run : report.runs) {
        for (const auto& p : run.series) {
            out << run.model << ',' << run.seed << ',' << p.step << ',' << num(p.loss) << ',' << num(p.mae) << ','
                << num(p.nll) << ',' << (run.failed ? 1 : 0) << '\n';
        }
    }
}

ConvergenceReport read_convergence_csv(std::istream& in, const std::string& source) {
    ConvergenceReport report;
    std::string line;
    if (!std::getline(in, line) || line != kConvergenceHeader) throw ParseError(source, 1, "unexpected header");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 7) throw ParseError(source, lineno, "expected 7 columns");
        const std::string& model = cells[0];
        const std::uint64_t seed = parse_uint(cells[1], source, lineno);
        if (report.runs.empty() || report.runs.back().model != model || report.runs.back().seed != seed) {
            TrainRun run;
            run.model = model;
            run.seed = seed;
            run.failed = cells[6] == "1";
            report.runs.push_back(run);
        }
        report.runs.back().series.push_back({parse_uint(cells[2], source, lineno),
                                             parse_double(cells[3], source, lineno),
                                             parse_double(cells[4], source, lineno),
                                             parse_double(cells[5], source, lineno)});
    }
    return report;
}

void write_convergence_table(std::ostream& out, const ConvergenceReport& report) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-10s %6s %6s %14s %14s %14s %14s %s\n", "Model", "Seed", "Steps", "Lowest MAE",
                  "Lowest NLL", "Final MAE", "Final NLL", "Status");
    out << buf;
    for (const auto& run : report.runs) {
        const ConvergencePoint& f = run.final_point();
        std::snprintf(buf, sizeof buf, "%-10s %6llu %6zu %14.6g %14.6g %14.6g %14.6g %s\n", run.model.c_str(),
                      static_cast<unsigned long long>(run.seed), f.step, run.min_mae(), run.min_nll(), f.mae, f.nll,
                      run.failed ? "failed" : "ok");
        out << buf;
    }
}

void write_race_csv(std::ostream& out, const RaceReport& report) {
    out << kRaceHeader << '\n';
    for (const auto& r : report.rows) {
        out << r.policy << ',' << (r.cbf ? 1 : 0) << ',' << num(r.ttf_mean) << ',' << num(r.collisions_per_run) << ','
            << num(r.steering_rate) << ',' << num(r.latency_mean_ms) << ',' << num(r.latency_std_ms) << ','
            << num(r.filter_latency_mean_ms) << ',' << num(r.filter_latency_std_ms) << ','
            << num(r.feasible_fraction) << ',' << num(r.certificate_violation_fraction) << ','
            << num(r.box_violation_fraction) << ',' << r.runs << ',' << r.laps_completed << ','
            << r.incomplete_runs << ',' << r.steps << '\n';
    }
}

RaceReport read_race_csv(std::istream& in, const std::string& source) {
    RaceReport report;
    std::string line;
    if (!std::getline(in, line) || line != kRaceHeader) throw ParseError(source, 1, "unexpected header");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto c = split_csv(line);
        if (c.size() != 16) throw ParseError(source, lineno, "expected 16 columns");
        RaceRow r;
        r.policy = c[0];
        r.cbf = c[1] == "1";
        r.ttf_mean = parse_double(c[2], source, lineno);
        r.collisions_per_run = parse_double(c[3], source, lineno);
        r.steering_rate = parse_double(c[4], source, lineno);
        r.latency_mean_ms = parse_double(c[5], source, lineno);
        r.latency_std_ms = parse_double(c[6], source, lineno);
        r.filter_latency_mean_ms = parse_double(c[7], source, lineno);
        r.filter_latency_std_ms = parse_double(c[8], source, lineno);
        r.feasible_fraction = parse_double(c[9], source, lineno);
        r.certificate_violation_fraction = parse_double(c[10], source, lineno);
        r.box_violation_fraction = parse_double(c[11], source, lineno);
        r.runs = parse_uint(c[12], source, lineno);
        r.laps_completed = parse_uint(c[13], source, lineno);
        r.incomplete_runs = parse_uint(c[14], source, lineno);
        r.steps = parse_uint(c[15], source, lineno);
        report.rows.push_back(r);
    }
    return report;
}

void write_race_table(std::ostream& out, const RaceReport& report) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-16s %12s %14s %12s %20s %20s %10s %10s\n", "Policy", "Avg TTF (s)",
                  "Avg # Coll.", "Avg dδ (r/s)", "Loop time (ms)", "Filter time (ms)", "Feasible", "Cert. viol");
    out << buf;
    for (const auto& r : report.rows) {
        char loop[40], filt[40];
        std::snprintf(loop, sizeof loop, "%.3f ± %.3f", r.latency_mean_ms, r.latency_std_ms);
        if (r.cbf) std::snprintf(filt, sizeof filt, "%.3f ± %.3f", r.filter_latency_mean_ms, r.filter_latency_std_ms);
        else std::snprintf(filt, sizeof filt, "-");
        std::snprintf(buf, sizeof buf, "%-16s %12.2f %14.2f %12.3f %20s %20s %10.4f %10.4f\n", r.policy.c_str(),
                      r.ttf_mean, r.collisions_per_run, r.steering_rate, loop, filt, r.feasible_fraction,
                      r.certificate_violation_fraction);
        out << buf;
    }
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

template <class Report, class Csv, class Table>
void emit(const Report& report, const std::filesystem::path& dir, const std::string& stem,
          const nlohmann::json& provenance, Csv csv, Table table) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    {
        auto out = open_output(dir / (stem + ".csv"));
        csv(out, report);
    }
    {
        auto out = open_output(dir / (stem + ".txt"));
        table(out, report);
    }
    {
        auto out = open_output(dir / (stem + ".config.json"));
        out << provenance.dump(2) << '\n';
    }
}

}  // namespace

void emit_report(const ConvergenceReport& report, const std::filesystem::path& dir, const std::string& stem,
                 const nlohmann::json& provenance) {
    emit(report, dir, stem, provenance, write_convergence_csv, write_convergence_table);
}

void emit_report(const RaceReport& report, const std::filesystem::path& dir, const std::string& stem,
                 const nlohmann::json& provenance) {
    emit(report, dir, stem, provenance, write_race_csv, write_race_table);
}

}  // namespace gapnp::eval
