#include "coalflow/coalescing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>

#include "coalflow/errors.hpp"

namespace coalflow {

namespace {

// Smallest uniform NoiseStream can return; below it a draw never succeeds.
constexpr double kMinUniform = 0x1.0p-54;

std::uint64_t pair_key(ParticleId a, ParticleId b) noexcept {
    const auto lo = std::min(a, b);
    const auto hi = std::max(a, b);
    return (static_cast<std::uint64_t>(lo) << 32) | hi;
}

void put_double(std::ostream& os, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
}

}  // namespace

// ---------------------------------------------------------------- ParticleSystem

ParticleId ParticleSystem::resolve(ParticleId id, std::size_t step) const {
    const Particle* p = &particles_.at(id);
    if (step < p->birth_step) throw RangeError("particle " + std::to_string(id) + " not born at step " + std::to_string(step));
    while (p->merge_step && step >= *p->merge_step) p = &particles_[*p->merged_into];
    return p->id;
}

double ParticleSystem::value_at(ParticleId id, std::size_t step) const {
    const Particle* p = &particles_.at(id);
    if (step < p->birth_step || step > last_step_) {
        throw RangeError("particle " + std::to_string(id) + " has no value at step " + std::to_string(step));
    }
    while (p->merge_step && step > *p->merge_step) p = &particles_[*p->merged_into];
    const std::size_t idx = step - p->birth_step;
    if (idx >= p->values.size()) throw RangeError("trajectory storage shorter than requested step");
    return p->values[idx];
}

bool ParticleSystem::is_live(ParticleId id, std::size_t step) const {
    const auto& p = particles_.at(id);
    if (step < p.birth_step || step > last_step_) return false;
    return !(p.merge_step && step >= *p.merge_step);
}

std::optional<double> ParticleSystem::merge_time(ParticleId id) const {
    const auto& p = particles_.at(id);
    if (!p.merge_step) return std::nullopt;
    return grid_.time(*p.merge_step);
}

Path ParticleSystem::trajectory(ParticleId id) const {
    const auto& p = particles_.at(id);
    Path path;
    path.grid = TimeGrid(grid_.time(p.birth_step), grid_.dt, last_step_ - p.birth_step);
    path.values.reserve(path.grid.size());
    for (std::size_t k = p.birth_step; k <= last_step_; ++k) path.values.push_back(value_at(id, k));
    return path;
}

std::size_t ParticleSystem::live_count(std::size_t step) const {
    if (has_snapshots()) return live_at(step).size();
    std::size_t n = 0;
    for (const auto& p : particles_) n += is_live(p.id, step) ? 1 : 0;
    return n;
}

std::span<const LiveEntry> ParticleSystem::live_at(std::size_t step) const {
    if (step >= snapshot_offsets_.size()) throw RangeError("no live snapshot for step " + std::to_string(step));
    const std::size_t begin = snapshot_offsets_[step];
    const std::size_t end = step + 1 < snapshot_offsets_.size() ? snapshot_offsets_[step + 1] : snapshot_entries_.size();
    return {snapshot_entries_.data() + begin, end - begin};
}

void ParticleSystem::write_trajectories_csv(std::ostream& os) const {
    os << "time,particle_id,position,live_flag\n";
    for (std::size_t k = 0; k <= last_step_; ++k) {
        for (const auto& p : particles_) {
            if (k < p.birth_step) continue;
            put_double(os, grid_.time(k));
            os << ',' << p.id << ',';
            put_double(os, value_at(p.id, k));
            os << ',' << (is_live(p.id, k) ? 1 : 0) << '\n';
        }
    }
}

void ParticleSystem::write_events_csv(std::ostream& os) const {
    os << "time,absorbed,survivor\n";
    for (const auto& e : events_) {
        put_double(os, e.time);
        os << ',' << e.absorbed << ',' << e.survivor << '\n';
    }
}

// ---------------------------------------------------------------- meeting rule

double bridge_crossing_probability(double d_prev, double d_next, double dt) {
    const double prod = d_prev * d_next;
    if (prod <= 0.0) return 1.0;
    return std::exp(-prod / dt);
}

bool detect_meeting(double xi_prev, double xi_next, double xj_prev, double xj_next, double dt,
                    double uniform_draw, bool bridge_correction) {
    const double d_prev = xi_prev - xj_prev;
    const double d_next = xi_next - xj_next;
    if (d_prev == 0.0 || d_next == 0.0) return true;
    if ((d_prev < 0.0) != (d_next < 0.0)) return true;
    if (!bridge_correction) return false;
    return uniform_draw < bridge_crossing_probability(d_prev, d_next, dt);
}

// ---------------------------------------------------------------- engine

CoalescingEngine::CoalescingEngine(DriftSpec drift, TimeGrid grid, std::uint64_t seed, std::uint64_t replicate,
                                   EngineOptions options)
    : drift_(std::move(drift)), seed_(seed), replicate_(replicate), options_(options) {
    system_.grid_ = grid;
}

double CoalescingEngine::nearest_live_distance(double x) const {
    auto it = std::lower_bound(live_.begin(), live_.end(), x, [](const Live& l, double v) { return l.x < v; });
    double best = std::numeric_limits<double>::infinity();
    if (it != live_.end()) best = std::min(best, it->x - x);
    if (it != live_.begin()) best = std::min(best, x - std::prev(it)->x);
    return best;
}

ParticleId CoalescingEngine::inject(double x) {
    if (!std::isfinite(x)) throw InputError("cannot inject a non-finite position");
    const auto id = static_cast<ParticleId>(system_.particles_.size());
    Particle p;
    p.id = id;
    p.start_position = x;
    p.birth_step = step_;
    p.values.push_back(x);

    auto it = std::lower_bound(live_.begin(), live_.end(), x, [](const Live& l, double v) { return l.x < v; });
    if (it != live_.end() && it->x == x) {
        // Equal start: coalesced from the outset; the existing (lower) id survives.
        p.merged_into = it->id;
        p.merge_step = step_;
        system_.particles_.push_back(std::move(p));
        system_.events_.push_back({system_.grid_.time(step_), step_, id, it->id});
        return id;
    }
    system_.particles_.push_back(std::move(p));
    live_.insert(it, Live{id, x, false, NoiseStream(seed_, {replicate_, id, Purpose::Motion})});
    if (live_.size() > options_.live_cap) {
        throw ResourceError("live-particle count " + std::to_string(live_.size()) + " exceeds cap " +
                            std::to_string(options_.live_cap));
    }
    return id;
}

void CoalescingEngine::record_snapshot() {
    if (!options_.record_snapshots) return;
    auto& sys = system_;
    if (sys.snapshot_offsets_.size() != step_) return;
    sys.snapshot_offsets_.push_back(sys.snapshot_entries_.size());
    for (const auto& l : live_) sys.snapshot_entries_.push_back({l.x, l.id});
}

void CoalescingEngine::record_value(ParticleId id, double x) { system_.particles_[id].values.push_back(x); }

void CoalescingEngine::merge_range(std::size_t first, std::size_t last, double position) {
    ParticleId survivor = live_[first].id;
    for (std::size_t i = first + 1; i <= last; ++i) survivor = std::min(survivor, live_[i].id);
    const double t = system_.grid_.time(step_);
    for (std::size_t i = first; i <= last; ++i) {
        const ParticleId id = live_[i].id;
        record_value(id, position);
        if (id == survivor) continue;
        auto& p = system_.particles_[id];
        p.merged_into = survivor;
        p.merge_step = step_;
        system_.events_.push_back({t, step_, id, survivor});
    }
}

void CoalescingEngine::step() {
    if (finished()) throw LogicError("engine stepped past the end of its grid");
    record_snapshot();

    const double dt = system_.grid_.dt;
    const double sd = std::sqrt(dt);
    const std::size_t k = step_;
    const std::size_t n = live_.size();

    scratch_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& l = live_[i];
        scratch_[i] = l.x;
        if (l.frozen) continue;
        l.x = l.x + drift_(l.x) * dt + sd * l.noise.gaussian_at(k);
    }

    auto& stack = clusters_;
    stack.clear();
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = live_[i].x;
        if (!stack.empty()) {
            auto& top = stack.back();
            const std::size_t j = top.last;
            bool met = false;
            const double d_prev = scratch_[j] - scratch_[i];
            const double d_next = live_[j].x - xi;
            if (d_next >= 0.0) {
                met = true;
            } else if (options_.bridge_correction) {
                const double p = bridge_crossing_probability(d_prev, d_next, dt);
                if (p >= kMinUniform) {
                    NoiseStream bridge(seed_, {replicate_, pair_key(live_[j].id, live_[i].id), Purpose::Bridge});
                    met = detect_meeting(scratch_[j], live_[j].x, scratch_[i], xi, dt, bridge.uniform_at(k), true);
                }
            }
            if (met || xi <= top.pos) {
                // Merged clusters sit at the mean of their members (the
                // midpoint for a pair), so no member is favoured.
                top.last = i;
                top.sum += xi;
                top.pos = top.sum / static_cast<double>(top.last - top.first + 1);
                while (stack.size() >= 2 && stack[stack.size() - 1].pos <= stack[stack.size() - 2].pos) {
                    auto upper = stack.back();
                    stack.pop_back();
                    auto& lower = stack.back();
                    lower.last = upper.last;
                    lower.sum += upper.sum;
                    lower.pos = lower.sum / static_cast<double>(lower.last - lower.first + 1);
                }
                continue;
            }
        }
        stack.push_back({i, i, xi, xi});
    }

    ++step_;
    auto& next = spare_;
    next.clear();
    for (const auto& c : stack) {
        if (c.first == c.last) {
            record_value(live_[c.first].id, c.pos);
            next.push_back(std::move(live_[c.first]));
            continue;
        }
        merge_range(c.first, c.last, c.pos);
        std::size_t keep = c.first;
        for (std::size_t i = c.first + 1; i <= c.last; ++i) {
            if (live_[i].id < live_[keep].id) keep = i;
        }
        live_[keep].x = c.pos;
        next.push_back(std::move(live_[keep]));
    }
    live_.swap(next);

    if (options_.escape_lo || options_.escape_hi) {
        const double lo = options_.escape_lo.value_or(-std::numeric_limits<double>::infinity());
        const double hi = options_.escape_hi.value_or(std::numeric_limits<double>::infinity());
        for (auto& l : live_) {
            if (!l.frozen && (l.x < lo || l.x > hi)) {
                l.frozen = true;
                system_.particles_[l.id].escape_step = step_;
            }
        }
    }
}

void CoalescingEngine::merge(ParticleId i, ParticleId j) {
    auto find = [&](ParticleId id) {
        auto it = std::find_if(live_.begin(), live_.end(), [&](const Live& l) { return l.id == id; });
        if (it == live_.end()) throw LogicError("merge: particle " + std::to_string(id) + " is not live");
        return static_cast<std::size_t>(it - live_.begin());
    };
    std::size_t a = find(i);
    std::size_t b = find(j);
    if (a > b) std::swap(a, b);
    if (b != a + 1) throw LogicError("merge: particles " + std::to_string(i) + " and " + std::to_string(j) + " are not adjacent");
    const double pos = 0.5 * (live_[a].x + live_[b].x);
    const std::size_t survivor_idx = live_[a].id < live_[b].id ? a : b;
    const std::size_t absorbed_idx = survivor_idx == a ? b : a;
    const ParticleId survivor = live_[survivor_idx].id;
    const ParticleId absorbed = live_[absorbed_idx].id;
    system_.particles_[survivor].values.back() = pos;
    auto& p = system_.particles_[absorbed];
    p.values.back() = pos;
    p.merged_into = survivor;
    p.merge_step = step_;
    system_.events_.push_back({system_.grid_.time(step_), step_, absorbed, survivor});
    live_[survivor_idx].x = pos;
    live_.erase(live_.begin() + static_cast<std::ptrdiff_t>(absorbed_idx));
}

ParticleSystem CoalescingEngine::finish() && {
    record_snapshot();
    system_.last_step_ = step_;
    return std::move(system_);
}

// ---------------------------------------------------------------- drivers

ParticleSystem simulate_n_point(const DriftSpec& drift, std::span<const double> starts, const TimeGrid& grid,
                                std::uint64_t seed, std::uint64_t replicate, EngineOptions options) {
    if (starts.empty()) throw InputError("simulate_n_point needs at least one start");
    if (!std::is_sorted(starts.begin(), starts.end())) throw InputError("simulate_n_point: starts must be sorted non-decreasing");
    CoalescingEngine engine(drift, grid, seed, replicate, options);
    for (double x : starts) engine.inject(x);
    while (!engine.finished()) engine.step();
    return std::move(engine).finish();
}

std::optional<double> meeting_time(const DriftSpec& drift, double x, double y, const TimeGrid& grid,
                                   std::uint64_t seed, std::uint64_t replicate, bool bridge_correction) {
    if (x > y) std::swap(x, y);
    if (x == y) return grid.time(0);
    // Same streams and rule as CoalescingEngine with starts injected as ids 0
    // (lower) and 1, without the bookkeeping.
    NoiseStream lo(seed, {replicate, 0, Purpose::Motion});
    NoiseStream hi(seed, {replicate, 1, Purpose::Motion});
    NoiseStream bridge(seed, {replicate, pair_key(0, 1), Purpose::Bridge});
    const double dt = grid.dt;
    const double sd = std::sqrt(dt);
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        const double x_next = x + drift(x) * dt + sd * lo.gaussian_at(k);
        const double y_next = y + drift(y) * dt + sd * hi.gaussian_at(k);
        const double d_next = x_next - y_next;
        bool met = d_next >= 0.0;
        if (!met && bridge_correction) {
            const double p = bridge_crossing_probability(x - y, d_next, dt);
            met = p >= kMinUniform && bridge.uniform_at(k) < p;
        }
        if (met) return grid.time(k + 1);
        x = x_next;
        y = y_next;
    }
    return std::nullopt;
}

std::optional<double> meeting_time_engine(const DriftSpec& drift, double x, double y, const TimeGrid& grid,
                                          std::uint64_t seed, std::uint64_t replicate, bool bridge_correction) {
    if (x > y) std::swap(x, y);
    EngineOptions options;
    options.bridge_correction = bridge_correction;
    CoalescingEngine engine(drift, grid, seed, replicate, options);
    engine.inject(x);
    engine.inject(y);
    while (engine.live_count() > 1 && !engine.finished()) engine.step();
    if (engine.live_count() > 1) return std::nullopt;
    return grid.time(engine.current_step());
}

MomentEstimate second_moment_diag(const DriftSpec& drift, double x, double t, std::size_t replicates,
                                  double dt, std::uint64_t seed) {
    if (!drift.monotone()) throw ParameterError("second_moment_diag requires a strictly monotone drift");
    if (t < 0.0) throw InputError("second_moment_diag requires t >= 0");
    if (replicates < 2) throw InputError("second_moment_diag needs at least two replicates");
    const auto steps = static_cast<std::size_t>(std::ceil(t / dt - 1e-9));
    MomentEstimate est;
    est.replicates = replicates;
    if (steps == 0) {
        est.mean = x * x;
        return est;
    }
    const TimeGrid grid(0.0, t / static_cast<double>(steps), steps);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t r = 0; r < replicates; ++r) {
        NoiseStream noise(seed, {r, 0, Purpose::Motion});
        const double sq = std::pow(integrate_sde(drift, x, grid, noise).values.back(), 2);
        sum += sq;
        sum2 += sq * sq;
    }
    const double n = static_cast<double>(replicates);
    est.mean = sum / n;
    const double var = std::max(0.0, (sum2 - n * est.mean * est.mean) / (n - 1.0));
    est.standard_error = std::sqrt(var / n);
    return est;
}

SecondMomentScan second_moment_scan(const DriftSpec& drift, std::span<const double> xs,
                                    std::span<const double> ts, std::size_t replicates, double dt,
                                    std::uint64_t seed) {
    SecondMomentScan scan;
    std::uint64_t cell = 0;
    for (double x : xs) {
        for (double t : ts) {
            // Distinct seeds per cell keep the estimates independent.
            const auto est = second_moment_diag(drift, x, t, replicates, dt, seed + 0x9E3779B97F4A7C15ull * ++cell);
            const double ratio = est.mean / (1.0 + x * x);
            scan.points.push_back({x, t, est, ratio});
            scan.fitted_constant = std::max(scan.fitted_constant, ratio);
        }
    }
    return scan;
}

InvariantReport check_invariants(const ParticleSystem& system) {
    InvariantReport report;
    const auto& parts = system.particles();
    const std::size_t last = system.last_step();

    for (const auto& p : parts) {
        for (double v : p.values) report.non_finite += std::isfinite(v) ? 0 : 1;
        if (!p.merge_step) continue;
        const auto into = *p.merged_into;
        if (into >= parts.size() || into >= p.id) {
            ++report.chain_violations;
            continue;
        }
        const auto& s = parts[into];
        const std::size_t m = *p.merge_step;
        if (m < s.birth_step || (s.merge_step && *s.merge_step <= m)) {
            ++report.chain_violations;
            continue;
        }
        if (p.values.size() != m - p.birth_step + 1) ++report.chain_violations;
        if (p.values.back() != system.value_at(into, m)) ++report.absorbing_violations;
        if (system.value_at(p.id, last) != system.value_at(into, last)) ++report.absorbing_violations;
    }
    for (const auto& e : system.events()) {
        if (!system.is_live(e.survivor, e.step) || e.time != system.grid().time(e.step)) ++report.chain_violations;
    }

    // Order preservation: live particles at k keep their order at k+1. Live
    // sets are swept from birth/merge buckets so the cost is O(sum of live).
    std::vector<std::vector<ParticleId>> births(last + 1), deaths(last + 1);
    for (const auto& p : parts) {
        if (p.birth_step > last) continue;
        if (p.merge_step && *p.merge_step == p.birth_step) continue;
        births[p.birth_step].push_back(p.id);
        if (p.merge_step && *p.merge_step <= last) deaths[*p.merge_step].push_back(p.id);
    }
    std::vector<char> dead(parts.size(), 0);
    std::vector<ParticleId> live;
    for (std::size_t k = 0; k <= last; ++k) {
        for (auto id : deaths[k]) dead[id] = 1;
        std::erase_if(live, [&](ParticleId id) { return dead[id] != 0; });
        live.insert(live.end(), births[k].begin(), births[k].end());
        std::sort(live.begin(), live.end(), [&](ParticleId a, ParticleId b) {
            return system.value_at(a, k) < system.value_at(b, k);
        });
        for (std::size_t i = 1; i < live.size(); ++i) {
            if (!(system.value_at(live[i - 1], k) < system.value_at(live[i], k))) ++report.order_violations;
            if (k < last && system.value_at(live[i - 1], k + 1) > system.value_at(live[i], k + 1)) ++report.order_violations;
        }
        if (system.has_snapshots()) {
            const auto snap = system.live_at(k);
            if (snap.size() != live.size()) {
                ++report.order_violations;
            } else {
                for (std::size_t i = 0; i < snap.size(); ++i) {
                    if (snap[i].id != live[i] || snap[i].position != system.value_at(live[i], k)) ++report.order_violations;
                }
            }
        }
        ++report.checked_steps;
    }
    return report;
}

}  // namespace coalflow
