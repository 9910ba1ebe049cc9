// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gapnp/cbf.hpp"
#include "gapnp/checkpoint.hpp"
#include "gapnp/config.hpp"
#include "gapnp/dataset.hpp"
#include "gapnp/eval.hpp"
#include "gapnp/ftg.hpp"
#include "gapnp/io.hpp"
#include "gapnp/model.hpp"
#include "op_cases.hpp"
#include "qp_oracle.hpp"

namespace fs = std::filesystem;
using namespace gapnp;
using Clock = std::chrono::steady_clock;
constexpr double kPi = std::numbers::pi;

namespace {

struct Result {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_cli(const fs::path& dir, const std::string& args) {
    const std::string cmd = "cd '" + dir.string() + "' && '" GAPNP_CLI "' " + args + " > /dev/null 2>> cli.log";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::string kTrackDir = GAPNP_SOURCE_DIR "/tracks";
const std::string kTrackFlag = " --set track_dir='\"" + kTrackDir + "\"'";

sim::EpisodeConfig race_episode(const RunConfig& cfg) {
    sim::EpisodeConfig e = cfg.episode;
    e.cbf.reset();
    return e;
}

// --- 1 ----------------------------------------------------------------------

Result qp_oracle() {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> raw(-0.6981, 0.6981);
    double worst = 0.0;
    std::vector<cbf::SafetyContext> contexts;
    std::vector<double> raws;
    for (int i = 0; i < 100000; ++i) {
        contexts.push_back(testsupport::random_context(rng));
        raws.push_back(raw(rng));
        const double closed = cbf::filter_steering(raws.back(), contexts.back()).steering;
        worst = std::max(worst, std::abs(closed - testsupport::grid_qp(raws.back(), contexts.back())));
    }
    // Per-call time: average over blocks of 1000 calls, median over blocks.
    std::vector<double> per_call;
    volatile double sink = 0.0;
    for (std::size_t block = 0; block < 100; ++block) {
        const auto t0 = Clock::now();
        for (std::size_t i = 0; i < 1000; ++i) sink = sink + cbf::filter_steering(raws[block * 1000 + i], contexts[block * 1000 + i]).steering;
        per_call.push_back(seconds_since(t0) / 1000.0);
    }
    const double med_us = median(per_call) * 1e6;
    return {worst <= 1e-6 && med_us < 10.0,
            fmt("max |closed - grid| = %.3g rad over 1e5 contexts; median closed-form call %.3f us", worst, med_us)};
}

// --- 2 ----------------------------------------------------------------------

Result lie_and_certificate() {
    struct Case {
        double phi, lf, lg;
    };
    // v = 2, d_phi = 1, L = 0.33, evaluated by hand.
    const Case cases[] = {{0.0, -2.0, 0.0},
                          {kPi / 2, 0.0, 6.0606060606060606},
                          {-kPi / 2, 0.0, -6.0606060606060606},
                          {kPi / 4, -1.4142135623730951, 4.2854956435548335},
                          {-kPi / 4, -1.4142135623730951, -4.2854956435548335}};
    double worst = 0.0;
    for (const auto& c : cases) {
        cbf::SafetyContext ctx;
        ctx.v = 2.0;
        ctx.d_phi = 1.0;
        ctx.phi = c.phi;
        const auto l = cbf::lie_derivatives(ctx);
        worst = std::max({worst, std::abs(l.lf - c.lf), std::abs(l.lg - c.lg)});
    }
    bool cert = cbf::certify_step(1.0, 1.0, 0.005, 2.0) && !cbf::certify_step(1.0, 0.5, 0.005, 2.0);
    double h = 1.0;
    for (int k = 0; k < 400; ++k) {
        const double exact = h * (1.0 - 2.0 * 0.005);      // decays exactly at rate alpha
        const double fast = h * (1.0 - 2.0 * 0.005) - 1e-5;  // residual -2e-3 per step
        cert = cert && cbf::certify_step(h, exact, 0.005, 2.0) && !cbf::certify_step(h, fast, 0.005, 2.0);
        h = exact;
    }
    cert = cert && cbf::certify_step(0.3, 0.3 + 0.01, 0.005, 2.0);
    return {worst <= 1e-12 && cert,
            fmt("max Lie error %.3g over 5 hand cases; certificate sequences %s", worst, cert ? "ok" : "wrong")};
}

// --- 3 ----------------------------------------------------------------------

Result gradients() {
    std::mt19937_64 rng(103);
    std::string worst_name;
    double worst_p95 = 0.0;
    for (const auto& op : testsupport::op_cases()) {
        std::vector<double> errs;
        for (int probe = 0; probe < 100; ++probe) {
            std::vector<Tensor> inputs;
            for (const auto& s : op.shapes) inputs.push_back(testsupport::random_tensor(s, rng, op.lo, op.hi));
            errs.push_back(testsupport::gradient_error(op.fn, inputs));
        }
        const double p95 = testsupport::percentile(errs, 0.95);
        if (p95 >= worst_p95) {
            worst_p95 = p95;
            worst_name = op.name;
        }
    }

    // Full ELBO of a default-size PI-AttNP with fixed latent noise.
    np::Model model(np::ModelConfig{}, 5);
    const auto& c = model.config();
    np::ContextTargetBatch batch;
    batch.examples = 4;
    batch.x_context = testsupport::random_tensor({4, c.bins + 2}, rng, 0.05, 1.0);
    batch.x_target = testsupport::random_tensor({4, c.bins + 2}, rng, 0.05, 1.0);
    batch.y_context = testsupport::random_tensor({4, 1}, rng, -0.5, 0.5);
    batch.y_target = testsupport::random_tensor({4, 1}, rng, -0.5, 0.5);
    batch.prior = testsupport::random_tensor({4, 1}, rng, -0.5, 0.5);
    const Tensor eps = testsupport::random_tensor({4, c.latent}, rng);
    ad::Gradients grads;
    {
        ad::Graph g;
        const auto terms = model.loss(g, batch, np::LatentMode::posterior_sample, &eps);
        g.backward(terms.loss);
        grads = g.parameter_gradients();
    }
    std::vector<std::string> names;
    for (const auto& [name, t] : model.params().items()) names.push_back(name);
    std::vector<double> errs;
    for (int probe = 0; probe < 100; ++probe) {
        const std::string& name = names[std::uniform_int_distribution<std::size_t>(0, names.size() - 1)(rng)];
        Tensor& t = model.params().get(name);
        const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, t.size() - 1)(rng);
        const double x0 = t[idx], h = 1e-5;
        auto eval = [&] {
            ad::Graph g(false);
            return model.loss(g, batch, np::LatentMode::posterior_sample, &eps).loss_value;
        };
        t[idx] = x0 + h;
        const double fp = eval();
        t[idx] = x0 - h;
        const double fm = eval();
        t[idx] = x0;
        errs.push_back(testsupport::rel_err(grads.at(name)[idx], (fp - fm) / (2 * h)));
    }
    const double elbo_p95 = testsupport::percentile(errs, 0.95);
    return {worst_p95 < 1e-4 && elbo_p95 < 1e-4,
            fmt("worst op p95 rel err %.3g (%s); PI-AttNP ELBO p95 rel err %.3g", worst_p95, worst_name.c_str(),
                elbo_p95)};
}

// --- 4 ----------------------------------------------------------------------

struct Trained {
    eval::ConvergenceReport report;
    std::map<std::string, std::shared_ptr<np::Model>> seed0;  // by model name
};

Result convergence(const data::DriveLog& log, const RunConfig& cfg, Trained& out, Result& loss_property) {
    const auto split = data::split_train_eval(log, cfg.train.split_ratio, cfg.seed, {cfg.data.unseen_track});
    const auto eval_batch = data::eval_slice(split.eval, cfg.train.eval_examples, cfg.train.eval_seed);
    std::map<std::string, std::vector<double>> mae, nll;
    bool any_failed = false, loss_ok = true;
    std::string loss_detail;
    for (np::ModelKind kind : {np::ModelKind::pi_attnp, np::ModelKind::attnp, np::ModelKind::res_mlp}) {
        np::ModelConfig mc = cfg.model;
        mc.kind = kind;
        const std::string name = np::to_string(kind);
        for (std::uint64_t seed : {0, 1, 2}) {
            auto model = std::make_shared<np::Model>(mc, seed);
            const auto t0 = Clock::now();
            eval::TrainRun run = eval::train_model(*model, split.train, eval_batch, seed, cfg.train);
            std::printf("  trained %-8s seed %llu in %.0f s: final MAE %.5f NLL %.4f\n", name.c_str(),
                        static_cast<unsigned long long>(seed), seconds_since(t0), run.final_point().mae,
                        run.final_point().nll);
            std::fflush(stdout);
            any_failed = any_failed || run.failed;
            if (!run.failed) {
                mae[name].push_back(run.final_point().mae);
                nll[name].push_back(run.final_point().nll);
                const double early = run.series.at(50).loss, late = run.series.back().loss;
                if (!(late < 0.5 * early)) {
                    loss_ok = false;
                    loss_detail += fmt(" %s/%llu: %.4f vs %.4f;", name.c_str(), static_cast<unsigned long long>(seed),
                                       late, early);
                }
            }
            if (seed == 0) out.seed0[name] = model;
            out.report.runs.push_back(std::move(run));
        }
    }
    loss_property = {loss_ok, loss_ok ? "loss(2000) < 0.5 loss(50) for every model and seed" : "violations:" + loss_detail};
    if (any_failed) return {false, "a training run diverged"};
    const double pm = median(mae["pi-attnp"]), am = median(mae["attnp"]), rm = median(mae["res-mlp"]);
    const double pn = median(nll["pi-attnp"]), an = median(nll["attnp"]), rn = median(nll["res-mlp"]);
    return {pm < am && pm < rm && pn < an && pn < rn,
            fmt("median final MAE pi-attnp %.5f, attnp %.5f, res-mlp %.5f; NLL %.4f, %.4f, %.4f", pm, am, rm, pn, an,
                rn)};
}

// --- 5 and 8 ----------------------------------------------------------------

struct RaceOutcome {
    eval::RaceRow pi, pi_cbf, att;
    std::vector<sim::EpisodeLog> cbf_logs;
};

RaceOutcome race_learned(const Trained& trained, const sim::TrackMap& track, const RunConfig& cfg, double noise_rad) {
    RaceOutcome r;
    eval::RaceOptions opt;
    opt.episode = race_episode(cfg);
    opt.episode.steer_noise_std = noise_rad;
    opt.runs = 5;
    opt.cbf_settings = cfg.cbf;
    opt.seed = cfg.seed;
    auto factory = [&](const std::string& name) {
        std::shared_ptr<const np::Model> m = trained.seed0.at(name);
        return [m, &cfg] { return std::make_unique<eval::NpPolicy>(m, cfg.episode.max_range); };
    };
    r.pi = eval::run_races(factory("pi-attnp"), track, opt);
    r.att = eval::run_races(factory("attnp"), track, opt);
    opt.cbf = true;
    r.pi_cbf = eval::run_races(factory("pi-attnp"), track, opt, &r.cbf_logs);
    return r;
}

Result safety_ordering(const RaceOutcome& clean, const std::function<RaceOutcome()>& noisy) {
    auto judge = [](const RaceOutcome& r, const char* label) {
        const double ttf_gap = std::abs(r.pi_cbf.ttf_mean - r.pi.ttf_mean) / r.pi.ttf_mean;
        const bool ok = r.pi_cbf.collisions_per_run <= r.pi.collisions_per_run &&
                        r.pi.collisions_per_run <= r.att.collisions_per_run && std::isfinite(ttf_gap) && ttf_gap <= 0.05;
        return Result{ok, fmt("%s collisions/run pi+cbf %.2f, pi %.2f, attnp %.2f; TTF pi+cbf %.2f s vs pi %.2f s "
                              "(gap %.1f%%)",
                              label, r.pi_cbf.collisions_per_run, r.pi.collisions_per_run, r.att.collisions_per_run,
                              r.pi_cbf.ttf_mean, r.pi.ttf_mean, 100.0 * ttf_gap)};
    };
    const bool all_clean =
        clean.pi.collisions_per_run == 0.0 && clean.pi_cbf.collisions_per_run == 0.0 && clean.att.collisions_per_run == 0.0;
    if (!all_clean) return judge(clean, "no noise:");
    Result res = judge(noisy(), "all learned policies clean, with 2 deg steering noise:");
    return res;
}

Result certificate_accounting(const RaceOutcome& r, const RunConfig& cfg) {
    std::size_t steps = 0, box_ok = 0, pairs = 0, violations = 0;
    for (const auto& log : r.cbf_logs) {
        for (const auto& s : log.steps) {
            ++steps;
            box_ok += std::abs(s.steering) <= cfg.episode.vehicle.max_steer ? 1 : 0;
        }
        const auto c = eval::certificate_stats(log, cfg.episode.dt, cfg.cbf.alpha, cfg.episode.vehicle.max_steer);
        pairs += c.certified_pairs;
        violations += c.violations;
    }
    const double satisfied = pairs ? 1.0 - static_cast<double>(violations) / static_cast<double>(pairs) : 0.0;
    return {steps > 0 && box_ok == steps && pairs > 0 && satisfied >= 0.99,
            fmt("box satisfied on %zu/%zu steps; certificate holds on %.2f%% of %zu feasible step pairs "
                "(5 one-lap runs, pi-attnp + cbf)",
                box_ok, steps, 100.0 * satisfied, pairs)};
}

// --- 6 ----------------------------------------------------------------------

Result expert_gate(const RunConfig& cfg) {
    bool ok = true;
    std::string detail;
    for (const char* name : {"oval", "scurve", "pinch_chicane"}) {
        const auto track = load_named_track(name, kTrackDir);
        sim::FtgPolicy expert(cfg.ftg);
        sim::EpisodeConfig e = race_episode(cfg);
        e.laps_target = 5;
        const auto log = sim::run_episode(expert, track, e);
        ok = ok && log.laps_completed == 5 && log.collisions == 0;
        detail += fmt("%s %zu laps/%zu collisions; ", name, log.laps_completed, log.collisions);
    }
    const double deg = kPi / 180.0;
    const bool table = ftg::speed_heuristic(15 * deg) == 1.5 && ftg::speed_heuristic(7 * deg) == 3.0 &&
                       ftg::speed_heuristic(5 * deg) == 5.0;
    return {ok && table, detail + (table ? "speed table exact" : "speed table wrong")};
}

// --- 7 ----------------------------------------------------------------------

Result loop_latency(const Trained& trained, const RunConfig& cfg) {
    const auto track = load_named_track(cfg.data.unseen_track, kTrackDir);
    const np::Model& model = *trained.seed0.at("pi-attnp");
    std::mt19937_64 rng(107);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> times;
    std::vector<double> previous;
    for (int k = 0; k < 2000; ++k) {
        const std::size_t i = static_cast<std::size_t>(std::abs(u(rng)) * static_cast<double>(track.centerline.size() - 1));
        const Vec2 c = track.centerline[i], t = track.centerline_tangent(i);
        sim::VehicleState s;
        s.x = c.x - t.y * 0.3 * u(rng);
        s.y = c.y + t.x * 0.3 * u(rng);
        s.theta = std::atan2(t.y, t.x) + 0.2 * u(rng);
        const sim::Scan scan = sim::raycast_scan(s, track, cfg.episode.beams, cfg.episode.max_range);

        const auto t0 = Clock::now();
        const auto binned = ftg::bin_scan(scan, cfg.episode.bins);
        std::vector<double> x(binned.size() + 2);
        for (std::size_t j = 0; j < binned.size(); ++j) x[j] = binned.bins[j] / cfg.episode.max_range;
        x[binned.size()] = 3.0;
        x[binned.size() + 1] = 0.1;
        if (previous.empty()) previous = x;
        const double raw = model.predict_steering(previous, 0.05, x, ftg::gap_prior(binned).phi_star);
        const auto sv = cbf::safety_value(scan, cfg.cbf.d_safe);
        cbf::SafetyContext ctx;
        ctx.d_phi = sv.d_phi;
        ctx.phi = sv.phi;
        ctx.v = 3.0;
        ctx.alpha = cfg.cbf.alpha;
        ctx.d_safe = cfg.cbf.d_safe;
        const auto filtered = cbf::filter_steering(raw, ctx);
        times.push_back(seconds_since(t0));
        previous = x;
        if (!std::isfinite(filtered.steering)) return {false, "non-finite command"};
    }
    const double med_ms = median(times) * 1e3;
    return {med_ms < 5.0, fmt("median bin+predict+filter step %.3f ms over 2000 steps", med_ms)};
}

// --- 9 ----------------------------------------------------------------------

Result determinism(const fs::path& dir) {
    const std::string gen = "gen-data" + kTrackFlag;
    const std::string train = "train --model pi-attnp --data demos_a.log --steps 50 --quiet" + kTrackFlag;
    const std::string race = "race --policy pi-attnp --ckpt t1/pi-attnp.ckpt --cbf on" + kTrackFlag;
    const int codes[] = {run_cli(dir, gen + " --out demos_b.log"), run_cli(dir, train + " --out t1"),
                         run_cli(dir, train + " --out t2"), run_cli(dir, race + " --out r1"),
                         run_cli(dir, race + " --out r2")};
    for (int c : codes)
        if (c != 0) return {false, fmt("a CLI run exited with %d (see cli.log)", c)};
    const bool gen_same = slurp(dir / "demos_a.log") == slurp(dir / "demos_b.log");
    const bool train_same = slurp(dir / "t1/pi-attnp.ckpt") == slurp(dir / "t2/pi-attnp.ckpt") &&
                            slurp(dir / "t1/pi-attnp_convergence.csv") == slurp(dir / "t2/pi-attnp_convergence.csv");
    const bool race_same = slurp(dir / "r1/race_pi-attnp+cbf_runs.csv") == slurp(dir / "r2/race_pi-attnp+cbf_runs.csv");
    return {gen_same && train_same && race_same,
            fmt("gen-data log %s, train checkpoint+series %s, race run summary %s", gen_same ? "identical" : "DIFFERS",
                train_same ? "identical" : "DIFFERS", race_same ? "identical" : "DIFFERS")};
}

// --- 10 ---------------------------------------------------------------------

Result invariants() {
    std::mt19937_64 rng(110);
    std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.05, 10.0);
    std::size_t perm_bad = 0, mirror_bad = 0, kl_bad = 0, ray_bad = 0;

    // Latent path permutation invariance, default-size PI-AttNP.
    np::Model model(np::ModelConfig{}, 11);
    const auto& c = model.config();
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t nc = 2 + static_cast<std::size_t>(trial % 3);
        np::ContextTargetBatch b;
        b.examples = 1;
        b.context_per_example = nc;
        b.x_context = testsupport::random_tensor({nc, c.bins + 2}, rng, 0.05, 1.0);
        b.y_context = testsupport::random_tensor({nc, 1}, rng, -0.5, 0.5);
        b.x_target = testsupport::random_tensor({1, c.bins + 2}, rng, 0.05, 1.0);
        b.y_target = testsupport::random_tensor({1, 1}, rng, -0.5, 0.5);
        b.prior = testsupport::random_tensor({1, 1}, rng, -0.5, 0.5);
        std::vector<std::size_t> perm(nc);
        for (std::size_t i = 0; i < nc; ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        np::ContextTargetBatch p = b;
        for (std::size_t r = 0; r < nc; ++r) {
            for (std::size_t j = 0; j < c.bins + 2; ++j) p.x_context.at(r, j) = b.x_context.at(perm[r], j);
            p.y_context.at(r, 0) = b.y_context.at(perm[r], 0);
        }
        ad::Graph g(false);
        const auto oa = model.forward(g, b, np::LatentMode::prior_mean);
        const auto ob = model.forward(g, p, np::LatentMode::prior_mean);
        double diff = 0.0;
        for (std::size_t i = 0; i < c.latent; ++i) {
            diff = std::max(diff, std::abs(oa.z_prior->mean.value()[i] - ob.z_prior->mean.value()[i]));
            diff = std::max(diff, std::abs(oa.z_prior->sigma.value()[i] - ob.z_prior->sigma.value()[i]));
        }
        for (std::size_t i = 0; i < c.repr; ++i)
            diff = std::max(diff, std::abs(oa.r_lambda->value()[i] - ob.r_lambda->value()[i]));
        perm_bad += diff > 1e-9 ? 1 : 0;
    }

    // Mirror antisymmetry of the expert and the prior.
    for (int trial = 0; trial < 1000; ++trial) {
        sim::Scan s;
        s.angles = sim::beam_angles(1080);
        s.distances.resize(1080);
        for (double& d : s.distances) d = pos(rng);
        sim::Scan m = s;
        std::reverse(m.distances.begin(), m.distances.end());
        const double a = ftg::ftg_expert(s).steering, b = ftg::ftg_expert(m).steering;
        const auto pa = ftg::gap_prior(ftg::bin_scan(s, 54)), pb = ftg::gap_prior(ftg::bin_scan(m, 54));
        mirror_bad += (std::abs(a + b) > 1e-9 || (!pa.tie_broken && pa.phi_star != -pb.phi_star)) ? 1 : 0;
    }

    // KL >= 0 with equality exactly for identical Gaussians.
    for (int trial = 0; trial < 1000; ++trial) {
        const Tensor qm = testsupport::random_tensor({1, 8}, rng, -2, 2), qs = testsupport::random_tensor({1, 8}, rng, -1, 1);
        Tensor pm = qm, ps = qs;
        ad::Graph g;
        const double same = np::gaussian_kl(g.constant(qm), g.constant(qs), g.constant(pm), g.constant(ps)).value().item();
        pm[static_cast<std::size_t>(trial) % 8] += 1e-3 * (1 + trial % 5);
        if (trial % 2) ps[static_cast<std::size_t>(trial) % 8] -= 1e-3;
        const double differ = np::gaussian_kl(g.constant(qm), g.constant(qs), g.constant(pm), g.constant(ps)).value().item();
        kl_bad += (std::abs(same) > 1e-12 || !(differ > 0.0)) ? 1 : 0;
    }

    // Raycast against the analytic room distance.
    const auto room = sim::make_square_room(10.0);
    for (int trial = 0; trial < 1000; ++trial) {
        sim::VehicleState s;
        s.x = 4.7 * u(rng);
        s.y = 4.7 * u(rng);
        s.theta = kPi * u(rng);
        const auto scan = sim::raycast_scan(s, room, 1080, 30.0);
        for (std::size_t i = 0; i < scan.size(); ++i) {
            const double a = s.theta + scan.angles[i], ca = std::cos(a), sa = std::sin(a);
            double best = 30.0;
            if (ca > 0) best = std::min(best, (5.0 - s.x) / ca);
            if (ca < 0) best = std::min(best, (-5.0 - s.x) / ca);
            if (sa > 0) best = std::min(best, (5.0 - s.y) / sa);
            if (sa < 0) best = std::min(best, (-5.0 - s.y) / sa);
            if (std::abs(scan.distances[i] - best) > 1e-9) {
                ++ray_bad;
                break;
            }
        }
    }
    const bool ok = perm_bad == 0 && mirror_bad == 0 && kl_bad == 0 && ray_bad == 0;
    return {ok, fmt("failures out of 1000 each: permutation %zu, mirror %zu, KL %zu, raycast %zu", perm_bad, mirror_bad,
                    kl_bad, ray_bad)};
}

}  // namespace

int main(int argc, char** argv) {
    // Optional argument: criteria to run, e.g. "1,2,10". Default: all.
    std::vector<int> wanted;
    if (argc > 1) {
        std::stringstream ss(argv[1]);
        std::string item;
        while (std::getline(ss, item, ',')) wanted.push_back(std::stoi(item));
    } else {
        for (int i = 1; i <= 10; ++i) wanted.push_back(i);
    }
    auto want = [&](int i) { return std::find(wanted.begin(), wanted.end(), i) != wanted.end(); };

    const fs::path dir = fs::current_path() / "acceptance_work";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const RunConfig cfg;
    std::map<int, Result> results;
    auto record = [&](int id, const std::function<Result()>& fn) {
        const auto t0 = Clock::now();
        try {
            results[id] = fn();
        } catch (const std::exception& e) {
            results[id] = {false, std::string("exception: ") + e.what()};
        }
        std::printf("criterion %d: %s : %s (%.1f s)\n", id, results[id].pass ? "PASS" : "FAIL", results[id].detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    };

    if (want(1)) record(1, qp_oracle);
    if (want(2)) record(2, lie_and_certificate);
    if (want(3)) record(3, gradients);
    if (want(6)) record(6, [&] { return expert_gate(cfg); });
    if (want(10)) record(10, invariants);

    const bool need_models = want(4) || want(5) || want(7) || want(8) || want(9);
    Trained trained;
    if (need_models) {
        // The bundled dataset: default gen-data invocation.
        const int code = run_cli(dir, "gen-data" + kTrackFlag + " --out demos_a.log");
        if (code != 0) {
            std::printf("gen-data failed with exit code %d\n", code);
            return 1;
        }
    }
    if (need_models) {
        Result loss_property;
        const auto log = data::load_log(dir / "demos_a.log");
        record(4, [&] { return convergence(log, cfg, trained, loss_property); });
        if (!want(4)) results.erase(4);
        std::printf("property: %s : %s\n", loss_property.pass ? "PASS" : "FAIL", loss_property.detail.c_str());
    }
    if ((want(5) || want(8)) && !trained.seed0.empty()) {
        const auto track = load_named_track(cfg.data.unseen_track, kTrackDir);
        RaceOutcome clean;
        record(5, [&] {
            clean = race_learned(trained, track, cfg, 0.0);
            return safety_ordering(clean, [&] { return race_learned(trained, track, cfg, 2.0 * kPi / 180.0); });
        });
        if (!want(5)) results.erase(5);
        if (want(8)) record(8, [&] { return certificate_accounting(clean, cfg); });
    }
    if (want(7) && !trained.seed0.empty()) record(7, [&] { return loop_latency(trained, cfg); });
    if (want(9)) record(9, [&] { return determinism(dir); });

    std::printf("\nsummary\n");
    int failed = 0;
    for (const auto& [id, r] : results) {
        std::printf("criterion %d: %s\n", id, r.pass ? "PASS" : "FAIL");
        failed += r.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
