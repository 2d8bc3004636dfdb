#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <sstream>

#include "cli.hpp"
#include "coalflow/errors.hpp"
#include "coalflow/verify.hpp"

namespace coalflow::cli {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::size_t steps_over(double length, double dt) {
    if (!(dt > 0.0)) throw InputError("dt must be > 0");
    if (!(length > 0.0)) throw InputError("window must be > 0");
    return static_cast<std::size_t>(std::ceil(length / dt - 1e-9));
}

std::vector<StartPoint> spread(double time, double half_width, std::size_t n) {
    if (n < 2) throw InputError("dual: need at least two starts per family");
    std::vector<StartPoint> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({time, -half_width + 2.0 * half_width * static_cast<double>(i) / static_cast<double>(n - 1)});
    }
    return out;
}

struct Outcome {
    Json verdicts;
    bool failed = false;
};

// ---------------------------------------------------------------- simulate

Outcome cmd_simulate(const ExperimentConfig& cfg, RunWriter& out, std::ostream& log) {
    const auto drift = cfg.drift();
    const auto starts = cfg.list("starts");
    const double dt = cfg.num("dt");
    const TimeGrid grid(0.0, dt, steps_over(cfg.num("window"), dt));
    EngineOptions opts;
    opts.bridge_correction = cfg.flag("bridge");
    const auto reps = cfg.count("replicates");
    Json runs = Json::array();
    std::size_t violations = 0;
    for (std::uint64_t r = 0; r < reps; ++r) {
        const auto sys = simulate_n_point(drift, starts, grid, cfg.count("seed"), r, opts);
        const auto inv = check_invariants(sys);
        violations += inv.total();
        const std::string suffix = reps == 1 ? "" : "_" + std::to_string(r);
        std::ostringstream traj, events;
        sys.write_trajectories_csv(traj);
        sys.write_events_csv(events);
        out.write("trajectories" + suffix + ".csv", traj.str());
        out.write("events" + suffix + ".csv", events.str());
        runs.push_back({{"replicate", r}, {"events", sys.events().size()}, {"invariants", to_json(inv)}});
    }
    log << "simulate: " << reps << " system(s), " << starts.size() << " particles, invariant violations " << violations
        << "\n";
    out.write("summary.json", dump({{"runs", runs}, {"invariant_violations", violations}}));
    return {{{"invariants", violations == 0 ? "pass" : "fail"}}, violations != 0};
}

// ---------------------------------------------------------------- pullback

Outcome cmd_pullback(const ExperimentConfig& cfg, RunWriter& out, std::ostream& log) {
    FlowConfig fc;
    fc.drift = cfg.drift();
    fc.T = cfg.num("window");
    fc.H = cfg.num("H");
    fc.dt = cfg.num("dt");
    fc.seed = cfg.count("seed");
    PullbackStudyOptions opt;
    opt.c = cfg.num("c");
    opt.h = cfg.num("h");
    opt.min_plateau = cfg.num("min_plateau");
    const auto n = cfg.count("replicates");
    if (n == 0) throw InputError("pullback: replicates must be >= 1");

    const auto study = pullback_study(fc, n, opt);
    std::string rows = "replicate,eta,t0,stabilized\n";
    for (std::size_t r = 0; r < study.estimates.size(); ++r) {
        const auto& e = study.estimates[r];
        rows += std::to_string(r) + "," + fmt(e.value) + "," + fmt(e.stabilization_time) + "," +
                (e.stabilized ? "1" : "0") + "\n";
    }
    out.write("realizations.csv", rows);

    // Fan and flow summary from realization 0.
    const auto flow = build_flow(fc);
    const auto eta0 = stationary_point(flow, opt.c, 0.0, opt.min_plateau);
    std::vector<double> fan_starts;
    for (double s : cfg.list("fan_starts")) {
        if (s >= -fc.T) fan_starts.push_back(s);
    }
    std::vector<double> xs;
    for (double x = -opt.c; x <= opt.c + 1e-9; x += 1.0) xs.push_back(x);
    std::ostringstream fan;
    write_fan_csv(fan, flow, fan_starts, xs, 0.0, cfg.count("fan_stride"));
    out.write("fan.csv", fan.str());

    Json summary = to_json(study);
    summary["first_realization"] = flow_summary(flow, eta0);
    const double frac = static_cast<double>(study.stabilized) / static_cast<double>(n);
    if (frac < 0.5) {
        log << "warning: only " << study.stabilized << " of " << n << " realizations stabilized; the window T = " << fc.T
            << " is too small for this drift, or the drift has no stationary point\n";
    }
    if (fc.drift.kind() == DriftSpec::Kind::Zero) {
        const auto times = cfg.list("growth_times");
        const auto growth = variance_growth(fc.drift, 0.0, times, n, fc.seed, fc.dt);
        std::string csv = "t,mean,variance,variance_se,ratio\n";
        Json g = Json::array();
        for (const auto& row : growth) {
            csv += fmt(row.t) + "," + fmt(row.moments.mean) + "," + fmt(row.moments.variance) + "," +
                   fmt(row.moments.variance_se) + "," + fmt(row.ratio) + "\n";
            g.push_back(to_json(row));
        }
        out.write("variance_growth.csv", csv);
        summary["variance_growth"] = g;
    }
    out.write("summary.json", dump(summary));
    log << "pullback: " << study.stabilized << "/" << n << " stabilized, eta mean " << study.eta.mean << " variance "
        << study.eta.variance << "\n";
    return {{{"stabilized_fraction", frac},
             {"stationarity", study.stationarity_pass == study.stationarity_checked ? "pass" : "fail"},
             {"uniqueness", study.uniqueness_pass == study.uniqueness_checked ? "pass" : "fail"}},
            false};
}

// ---------------------------------------------------------------- dual

Outcome cmd_dual(const ExperimentConfig& cfg, RunWriter& out, std::ostream& log) {
    const auto drift = cfg.drift();
    const auto seed = cfg.count("seed");
    const auto reps = cfg.count("replicates");
    const auto macro = cfg.count("macro_steps");
    DualOptions opt;
    opt.lattice_steps = cfg.count("lattice_steps");
    const auto fs = spread(0.0, cfg.num("spread"), cfg.count("starts"));
    const auto gs = spread(1.0, cfg.num("spread"), cfg.count("starts"));

    std::size_t crossings = 0, family_violations = 0;
    std::vector<Path> fwd, bwd;
    Json covariation = Json::array();
    for (std::uint64_t r = 0; r < reps; ++r) {
        opt.replicate = r;
        const auto sys = fractional_step_dual(drift, fs, gs, macro, seed, opt);
        crossings += audit_crossings(sys).crossings;
        family_violations += audit_families(sys).total();
        if (r == 0) {
            std::ostringstream csv;
            write_dual_csv(csv, sys, std::max<std::uint64_t>(1, cfg.count("csv_stride")));
            out.write("dual.csv", csv.str());
        }
        for (const auto& s : distinct_segments(sys, Family::Forward, opt.lattice_steps)) fwd.push_back(s);
        for (const auto& s : distinct_segments(sys, Family::Backward, opt.lattice_steps)) bwd.push_back(s);
        for (Family fam : {Family::Forward, Family::Backward}) {
            for (std::size_t i = 0; i + 1 < sys.family(fam).size(); ++i) {
                const auto c = quadratic_covariation(sys.path(fam, i), sys.path(fam, i + 1));
                Json row{{"replicate", r},
                         {"family", to_string(fam)},
                         {"pair", {i, i + 1}},
                         {"meeting_time", c.meeting_time ? Json(*c.meeting_time) : Json(nullptr)},
                         {"pre", to_json(c.pre)},
                         {"post", c.post ? to_json(*c.post) : Json(nullptr)}};
                covariation.push_back(row);
            }
        }
    }
    Json report{{"crossings", crossings},
                {"family_violations", family_violations},
                {"covariation", covariation},
                {"forward_regression", to_json(drift_regression(fwd, opt.lattice_steps))},
                {"backward_regression", to_json(drift_regression(bwd, opt.lattice_steps))},
                {"forward_martingale", to_json(martingale_diagnostic(fwd, drift, opt.lattice_steps))},
                {"backward_martingale", to_json(martingale_diagnostic(bwd, drift.negated(), opt.lattice_steps))}};

    if (drift.kind() == DriftSpec::Kind::Zero) {
        const double horizon = cfg.num("window");
        const double a = cfg.num("a"), b = cfg.num("b");
        const double extent = std::max(std::abs(a), std::abs(b)) + 10.0 * std::sqrt(horizon) + 1.0;
        Json demos = Json::array();
        for (std::uint64_t r = 0; r < reps; ++r) {
            const auto field = build_arrow_field(-horizon, 0.0, extent, cfg.num("dt"), seed, r);
            Json j = to_json(nonexistence_demo(field, a, b, horizon));
            j["replicate"] = r;
            demos.push_back(j);
        }
        out.write("nonexistence.json", dump(demos));
    }
    out.write("audit.json", dump(report));
    log << "dual: " << reps << " realization(s), crossings " << crossings << ", backward drift slope "
        << report["backward_regression"]["slope"].get<double>() << "\n";
    const bool ok = crossings == 0 && family_violations == 0;
    return {{{"crossings", crossings == 0 ? "pass" : "fail"}, {"families", family_violations == 0 ? "pass" : "fail"}},
            !ok};
}

// ---------------------------------------------------------------- meeting

Outcome cmd_meeting(const ExperimentConfig& cfg, RunWriter& out, std::ostream& log) {
    const auto drift = cfg.drift();
    const double gap = cfg.num("gap");
    if (!(gap > 0.0)) throw InputError("meeting: gap must be > 0");
    const double dt = cfg.num("dt");
    const double horizon = cfg.num("window");
    const TimeGrid grid(0.0, dt, steps_over(horizon, dt));
    const auto reps = cfg.count("replicates");
    const bool bridge = cfg.flag("bridge");

    std::vector<double> samples;
    std::string csv = "replicate,time,met\n";
    for (std::uint64_t r = 0; r < reps; ++r) {
        const auto t = meeting_time(drift, 0.0, gap, grid, cfg.count("seed"), r, bridge);
        samples.push_back(t ? *t : std::numeric_limits<double>::infinity());
        csv += std::to_string(r) + "," + (t ? fmt(*t) : std::string("")) + "," + (t ? "1" : "0") + "\n";
    }
    out.write("meeting_times.csv", csv);

    std::function<double(double)> oracle;
    std::string oracle_name = "none";
    if (drift.kind() == DriftSpec::Kind::Linear && drift.slope() < 0.0) {
        const double lambda = -drift.slope();
        oracle = [=](double t) { return ou_hitting_cdf_closed(lambda, gap, t); };
        oracle_name = "ou_hitting";
    } else if (drift.kind() == DriftSpec::Kind::Zero) {
        oracle = [=](double t) { return brownian_meeting_cdf(gap, t); };
        oracle_name = "brownian_meeting";
    }

    Json summary{{"oracle", oracle_name}, {"replicates", reps}, {"bridge_correction", bridge}};
    Json tails = Json::array();
    for (double t : {0.5, 1.0, 2.0, 5.0}) {
        if (t > horizon) continue;
        const auto hits = static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [&](double s) { return s > t; }));
        auto est = TailEstimate::from_counts(hits, samples.size());
        std::optional<bool> pass;
        if (oracle) {
            est.bound = 1.0 - oracle(t);
            pass = *est.bound >= est.ci_low && *est.bound <= est.ci_high;
        }
        Json j = to_json(est, pass);
        j["t"] = t;
        tails.push_back(j);
    }
    summary["survival"] = tails;
    Outcome o;
    if (oracle && samples.size() >= 50) {
        const auto ks = ks_test(samples, oracle, horizon);
        summary["ks"] = to_json(ks);
        const bool ok = ks.p_value >= 0.01;
        o.verdicts["ks"] = ok ? "pass" : "fail";
        o.failed = !ok;
        log << "meeting: KS statistic " << ks.statistic << ", p-value " << ks.p_value << "\n";
    } else {
        o.verdicts["ks"] = "not run";
    }
    out.write("summary.json", dump(summary));
    return o;
}

// ---------------------------------------------------------------- verify

Outcome cmd_verify(const ExperimentConfig& cfg, RunWriter& out, std::ostream& log) {
    VerifyOptions opt;
    opt.seed = cfg.count("seed");
    opt.scale = cfg.num("scale");
    opt.fault_no_bridge = cfg.flag("fault_no_bridge");
    std::vector<int> ids;
    for (double v : cfg.list("criteria")) {
        if (v != std::floor(v) || v < 1 || v > kCriterionCount) {
            throw InputError("verify: criteria must be integers in 1.." + std::to_string(kCriterionCount));
        }
        ids.push_back(static_cast<int>(v));
    }
    std::vector<CriterionResult> results;
    Outcome o;
    for (int id : ids) {
        auto r = verify_criterion(id, opt);
        log << verdict_line(r) << "\n" << std::flush;
        o.verdicts["C" + std::to_string(id)] = to_string(r.verdict);
        o.failed = o.failed || r.verdict == Verdict::Fail;
        results.push_back(std::move(r));
    }
    out.write("verify.json", dump(verify_report(results, opt)));
    return o;
}

}  // namespace

int run_command(const ExperimentConfig& config, std::ostream& log) {
    const auto started = std::chrono::steady_clock::now();
    RunWriter out(config.str("out"));
    out.write("config.txt", config.echo());
    Outcome o;
    const auto& c = config.command();
    if (c == "simulate") {
        o = cmd_simulate(config, out, log);
    } else if (c == "pullback") {
        o = cmd_pullback(config, out, log);
    } else if (c == "dual") {
        o = cmd_dual(config, out, log);
    } else if (c == "meeting") {
        o = cmd_meeting(config, out, log);
    } else if (c == "verify") {
        o = cmd_verify(config, out, log);
    } else {
        throw InputError("unknown command '" + c + "'");
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    out.write_manifest(config, o.verdicts, seconds);
    return o.failed ? kExitFailure : kExitPass;
}

}  // namespace coalflow::cli
