#include "coalflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <string>

#include "coalflow/errors.hpp"
#include "coalflow/noise.hpp"

namespace coalflow {

namespace {

std::size_t steps_for(double length, double dt, const char* what) {
    const double q = length / dt;
    const double r = std::round(q);
    if (std::abs(q - r) > 1e-6 * std::max(1.0, r)) {
        throw InputError(std::string(what) + " is not a whole number of time steps");
    }
    return static_cast<std::size_t>(r);
}

void put_double(std::ostream& os, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
}

}  // namespace

std::vector<double> InjectionGrid::points() const {
    if (!(dx > 0.0) || !(x_max >= x_min)) throw InputError("injection grid needs dx > 0 and x_max >= x_min");
    if (period == 0) throw InputError("injection period must be >= 1");
    const auto n = static_cast<std::size_t>(std::floor((x_max - x_min) / dx + 1e-9));
    std::vector<double> xs(n + 1);
    for (std::size_t i = 0; i <= n; ++i) xs[i] = x_min + static_cast<double>(i) * dx;
    return xs;
}

double default_escape_margin(const DriftSpec& drift, double T, double H) {
    if (auto lambda = drift.monotone()) return 10.0 / std::sqrt(2.0 * *lambda);
    return 10.0 * std::sqrt(std::max(T + H, 1.0));
}

// ---------------------------------------------------------------- realization

std::size_t FlowRealization::step_of(double t) const { return grid().index_of(t); }

ParticleId FlowRealization::snap_id(std::size_t step, double x) const {
    const auto live = system_.live_at(step);
    if (live.empty()) throw RangeError("no live trajectory at step " + std::to_string(step));
    auto it = std::lower_bound(live.begin(), live.end(), x, [](const LiveEntry& e, double v) { return e.position < v; });
    if (it == live.end()) return std::prev(it)->id;
    if (it == live.begin()) return it->id;
    const auto below = std::prev(it);
    // Equal distances go to the lower neighbour.
    return (x - below->position <= it->position - x) ? below->id : it->id;
}

double FlowRealization::snap(std::size_t step, double x) const { return system_.value_at(snap_id(step, x), step); }

double FlowRealization::evaluate_steps(std::size_t s, std::size_t t, double x) const {
    if (s > t) throw RangeError("evaluate requires s <= t");
    if (t > system_.last_step()) throw RangeError("evaluate: time outside the window");
    return system_.value_at(snap_id(s, x), t);
}

double FlowRealization::evaluate(double s, double t, double x) const { return evaluate_steps(step_of(s), step_of(t), x); }

std::vector<std::size_t> FlowRealization::live_counts() const {
    std::vector<std::size_t> out(system_.last_step() + 1);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = system_.live_at(k).size();
    return out;
}

std::size_t FlowRealization::escaped_count() const {
    std::size_t n = 0;
    for (const auto& p : system_.particles()) n += p.escape_step ? 1 : 0;
    return n;
}

FlowRealization build_flow(const FlowConfig& config) {
    if (!(config.dt > 0.0)) throw InputError("build_flow: dt must be > 0");
    if (!(config.T >= 0.0) || !(config.H >= 0.0)) throw InputError("build_flow: window needs T >= 0 and H >= 0");
    const std::size_t n_steps = steps_for(config.T + config.H, config.dt, "window length T + H");
    const TimeGrid grid(-config.T, config.dt, n_steps);

    std::vector<double> grid_points;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    if (config.injection) {
        grid_points = config.injection->points();
        lo = config.injection->x_min;
        hi = config.injection->x_max;
    }
    std::map<std::size_t, std::vector<double>> by_step;
    for (const auto& p : config.points) {
        by_step[grid.index_of(p.time)].push_back(p.x);
        lo = std::min(lo, p.x);
        hi = std::max(hi, p.x);
    }
    if (grid_points.empty() && by_step.empty()) throw InputError("build_flow: nothing to inject");

    FlowRealization flow;
    flow.config_ = config;
    flow.margin_ = config.escape_margin.value_or(default_escape_margin(config.drift, config.T, config.H));

    EngineOptions options;
    options.bridge_correction = config.bridge_correction;
    options.record_snapshots = true;
    options.escape_lo = lo - flow.margin_;
    options.escape_hi = hi + flow.margin_;
    options.live_cap = config.live_cap;

    CoalescingEngine engine(config.drift, grid, config.seed, config.replicate, options);
    const double half_dx = config.injection ? 0.5 * config.injection->dx : 0.0;
    for (std::size_t k = 0;; ++k) {
        if (config.injection && k % config.injection->period == 0) {
            for (double x : grid_points) {
                if (engine.nearest_live_distance(x) >= half_dx) engine.inject(x);
            }
        }
        if (auto it = by_step.find(k); it != by_step.end()) {
            for (double x : it->second) engine.inject(x);
        }
        if (k == n_steps) break;
        engine.step();
    }
    flow.system_ = std::move(engine).finish();
    return flow;
}

// ---------------------------------------------------------------- pullback

PullbackResult pullback(const FlowRealization& flow, double x, std::span<const double> probe_times, double target_time) {
    PullbackResult out;
    out.times.assign(probe_times.begin(), probe_times.end());
    std::sort(out.times.begin(), out.times.end());
    const std::size_t target = flow.step_of(target_time);
    for (double t : out.times) out.values.push_back(flow.evaluate_steps(flow.step_of(target_time - t), target, x));
    if (out.values.size() >= 2) {
        std::size_t i = out.values.size() - 1;
        while (i > 0 && out.values[i - 1] == out.values.back()) --i;
        if (i + 1 < out.values.size()) out.constant_from = out.times[i];
    }
    return out;
}

StationaryPointEstimate stationary_point(const FlowRealization& flow, double c, double target_time, double min_plateau) {
    if (!(c >= 0.0)) throw InputError("stationary_point: probe half-width c must be >= 0");
    const std::size_t target = flow.step_of(target_time);
    const auto& sys = flow.system();
    const auto& grid = flow.grid();

    StationaryPointEstimate est;
    est.target_time = grid.time(target);
    est.window_used = grid.time(target) - grid.time(0);

    auto image = [&](std::size_t s, double x) { return sys.value_at(flow.snap_id(s, x), target); };
    const double v0 = image(0, -c);
    est.value = v0;
    est.stabilization_time = est.window_used;
    if (image(0, c) != v0) {
        est.value = image(0, 0.0);
        return est;
    }
    std::size_t last = 0;
    for (std::size_t s = 1; s <= target; ++s) {
        if (image(s, -c) != v0 || image(s, c) != v0) break;
        last = s;
    }
    est.stabilization_time = grid.time(target) - grid.time(last);
    est.stabilized = est.stabilization_time <= (1.0 - min_plateau) * est.window_used + 1e-9 * grid.dt;
    return est;
}

StationarityReport stationarity_check(const FlowRealization& flow, double h, double c, double min_plateau) {
    if (!(h >= 0.0) || h > flow.config().H + 1e-12) throw InputError("stationarity_check requires 0 <= h <= H");
    StationarityReport rep;
    rep.h = h;
    rep.at_zero = stationary_point(flow, c, 0.0, min_plateau);
    rep.at_h = stationary_point(flow, c, h, min_plateau);
    if (!rep.at_zero.stabilized || !rep.at_h.stabilized) {
        rep.status = StationarityReport::Status::NotStabilized;
        return rep;
    }
    rep.pushed = flow.evaluate(0.0, h, rep.at_zero.value);
    rep.status = rep.pushed == rep.at_h.value ? StationarityReport::Status::Pass : StationarityReport::Status::Fail;
    return rep;
}

const char* to_string(StationarityReport::Status s) {
    switch (s) {
        case StationarityReport::Status::Pass:
            return "pass";
        case StationarityReport::Status::Fail:
            return "fail";
        case StationarityReport::Status::NotStabilized:
            return "not stabilized";
    }
    return "?";
}

MomentSummary MomentSummary::of(std::span<const double> xs) {
    MomentSummary m;
    m.n = xs.size();
    if (m.n == 0) return m;
    const double n = static_cast<double>(m.n);
    double sum = 0.0;
    for (double x : xs) sum += x;
    m.mean = sum / n;
    if (m.n < 2) return m;
    double m2 = 0.0, m4 = 0.0;
    for (double x : xs) {
        const double d = (x - m.mean) * (x - m.mean);
        m2 += d;
        m4 += d * d;
    }
    m.variance = m2 / (n - 1.0);
    m.mean_se = std::sqrt(m.variance / n);
    const double pop2 = m2 / n;
    m.variance_se = std::sqrt(std::max(0.0, m4 / n - pop2 * pop2) / n);
    return m;
}

PullbackStudy pullback_study(const FlowConfig& base, std::size_t realizations, const PullbackStudyOptions& options) {
    PullbackStudy study;
    study.realizations = realizations;
    std::vector<double> etas;
    for (std::size_t r = 0; r < realizations; ++r) {
        FlowConfig cfg = base;
        cfg.replicate = base.replicate + r;
        const auto flow = build_flow(cfg);
        study.escaped += flow.escaped_count();
        const auto rep = stationarity_check(flow, options.h, options.c, options.min_plateau);
        study.estimates.push_back(rep.at_zero);
        if (!rep.at_zero.stabilized) continue;
        ++study.stabilized;
        etas.push_back(rep.at_zero.value);
        ++study.stationarity_checked;
        if (rep.status == StationarityReport::Status::Pass) ++study.stationarity_pass;

        const std::size_t target = flow.step_of(0.0);
        const std::size_t plateau_end = flow.step_of(-rep.at_zero.stabilization_time);
        bool same = true;
        for (double x : options.uniqueness_probes) {
            same = same && flow.evaluate_steps(0, target, x) == rep.at_zero.value &&
                   flow.evaluate_steps(plateau_end, target, x) == rep.at_zero.value;
        }
        ++study.uniqueness_checked;
        if (same) ++study.uniqueness_pass;
    }
    study.eta = MomentSummary::of(etas);
    return study;
}

// ---------------------------------------------------------------- two-start estimates

TailEstimate disagreement_probability(const DriftSpec& drift, double x, double y, double s, double t,
                                      std::size_t replicates, std::uint64_t seed, double dt, bool bridge_correction) {
    if (!(s >= 0.0) || !(t >= s)) throw InputError("disagreement_probability requires t >= s >= 0");
    if (replicates == 0) throw InputError("disagreement_probability needs replicates > 0");
    FlowConfig cfg;
    cfg.drift = drift;
    cfg.T = t;
    cfg.H = 0.0;
    cfg.dt = dt;
    cfg.injection.reset();
    cfg.points = {{-t, x}, {-s, y}};
    cfg.seed = seed;
    cfg.bridge_correction = bridge_correction;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < replicates; ++r) {
        cfg.replicate = r;
        const auto flow = build_flow(cfg);
        if (flow.evaluate(-t, 0.0, x) != flow.evaluate(-s, 0.0, y)) ++hits;
    }
    return TailEstimate::from_counts(hits, replicates);
}

DecayStudy disagreement_decay(const DriftSpec& drift, double x, double y, std::span<const double> s_values,
                              double t_offset, std::size_t replicates, std::uint64_t seed, double dt) {
    DecayStudy study;
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < s_values.size(); ++i) {
        const double s = s_values[i];
        const auto est = disagreement_probability(drift, x, y, s, s + t_offset, replicates, derive_seed(seed, i), dt);
        study.s_values.push_back(s);
        study.estimates.push_back(est);
        pts.emplace_back(s, est.probability);
    }
    study.fit = exp_fit(pts);
    return study;
}

std::vector<VarianceGrowthRow> variance_growth(const DriftSpec& drift, double x, std::span<const double> times,
                                               std::size_t replicates, std::uint64_t seed, double dt) {
    if (times.empty()) return {};
    FlowConfig cfg;
    cfg.drift = drift;
    cfg.T = *std::max_element(times.begin(), times.end());
    cfg.H = 0.0;
    cfg.dt = dt;
    cfg.injection.reset();
    cfg.seed = seed;
    for (double t : times) cfg.points.push_back({-t, x});
    std::vector<std::vector<double>> samples(times.size());
    for (std::size_t r = 0; r < replicates; ++r) {
        cfg.replicate = r;
        const auto flow = build_flow(cfg);
        for (std::size_t i = 0; i < times.size(); ++i) samples[i].push_back(flow.evaluate(-times[i], 0.0, x));
    }
    std::vector<VarianceGrowthRow> rows;
    for (std::size_t i = 0; i < times.size(); ++i) {
        VarianceGrowthRow row;
        row.t = times[i];
        row.moments = MomentSummary::of(samples[i]);
        row.ratio = row.t > 0.0 ? row.moments.variance / row.t : 0.0;
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------- audit and export

FlowInvariantReport audit_flow(const FlowRealization& flow, std::size_t samples, std::uint64_t seed) {
    FlowInvariantReport rep;
    rep.system = check_invariants(flow.system());
    const std::size_t last = flow.system().last_step();
    const auto& cfg = flow.config();
    double lo = cfg.injection ? cfg.injection->x_min : 0.0;
    double hi = cfg.injection ? cfg.injection->x_max : 0.0;
    for (const auto& p : cfg.points) {
        lo = std::min(lo, p.x);
        hi = std::max(hi, p.x);
    }
    NoiseStream u(seed, {cfg.replicate, 0, Purpose::Test});
    auto pick_step = [&] { return std::min(last, static_cast<std::size_t>(u.uniform() * static_cast<double>(last + 1))); };
    auto pick_x = [&] { return lo + (hi - lo) * u.uniform(); };
    for (std::size_t i = 0; i < samples; ++i) {
        std::size_t a[3] = {pick_step(), pick_step(), pick_step()};
        std::sort(a, a + 3);
        const auto [r, s, t] = a;
        double x = pick_x(), y = pick_x();
        if (x > y) std::swap(x, y);
        if (flow.evaluate_steps(s, s, x) != flow.snap(s, x)) ++rep.identity_violations;
        const double direct = flow.evaluate_steps(r, t, x);
        if (direct != flow.evaluate_steps(s, t, flow.evaluate_steps(r, s, x))) ++rep.cocycle_violations;
        if (direct > flow.evaluate_steps(r, t, y)) ++rep.monotonicity_violations;
        ++rep.queries;
    }
    return rep;
}

void write_fan_csv(std::ostream& os, const FlowRealization& flow, std::span<const double> start_times,
                   std::span<const double> xs, double end_time, std::size_t stride) {
    if (stride == 0) throw InputError("write_fan_csv: stride must be >= 1");
    const std::size_t end = flow.step_of(end_time);
    os << "start_time,start_x,time,position\n";
    for (double s : start_times) {
        const std::size_t from = flow.step_of(s);
        if (from > end) continue;
        for (double x : xs) {
            const ParticleId id = flow.snap_id(from, x);
            for (std::size_t k = from;; k = std::min(end, k + stride)) {
                put_double(os, flow.grid().time(from));
                os << ',';
                put_double(os, x);
                os << ',';
                put_double(os, flow.grid().time(k));
                os << ',';
                put_double(os, flow.system().value_at(id, k));
                os << '\n';
                if (k == end) break;
            }
        }
    }
}

}  // namespace coalflow
