#include "coalflow/dual.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>

#include "coalflow/errors.hpp"
#include "coalflow/noise.hpp"

namespace coalflow {

namespace {

constexpr std::size_t kMaxCrossingDetails = 16;

Site floor_div2(double v) { return static_cast<Site>(std::floor(v / 2.0)); }

void put_double(std::ostream& os, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
}

double normal_quantile_upper(double level) {
    return boost::math::quantile(boost::math::complement(boost::math::normal(), level / 2.0));
}

}  // namespace

// ---------------------------------------------------------------- arrow field

ArrowField::ArrowField(std::uint64_t seed, std::uint64_t replicate, double dt, std::int64_t l_lo, std::int64_t l_hi,
                       Site j_max)
    : seed_(seed), replicate_(replicate), dt_(dt), dx_(std::sqrt(dt)), l_lo_(l_lo), l_hi_(l_hi), j_max_(j_max) {
    if (!(dt > 0.0)) throw InputError("arrow field needs dt > 0");
    if (l_hi < l_lo) throw InputError("arrow field needs l_lo <= l_hi");
    if (j_max < 1) throw RangeError("arrow field extent is smaller than one lattice site");
}

void ArrowField::check(std::int64_t l, Site j) const {
    if (l < l_lo_ || l > l_hi_ || j < -j_max_ || j > j_max_) {
        throw RangeError("lattice site (" + std::to_string(l) + ", " + std::to_string(j) + ") is outside the arrow field");
    }
}

int ArrowField::arrow(std::int64_t l, Site j) const {
    if (!is_forward_site(l, j)) throw LogicError("arrow queried at a dual site");
    check(l, j);
    // 128 sites per Philox block; the stream's particle slot carries the time index.
    const NoiseStream stream(seed_, {replicate_, static_cast<std::uint64_t>(l), Purpose::Arrows});
    const auto block_index = static_cast<std::uint32_t>((j >> 7) + (std::int64_t{1} << 31));
    const auto w = stream.block(block_index);
    const auto bit = static_cast<unsigned>(j & 127);
    return ((w[bit >> 5] >> (bit & 31u)) & 1u) ? 1 : -1;
}

Site ArrowField::forward_step(std::int64_t l, Site j) const {
    const Site next = j + arrow(l, j);
    check(l + 1, next);
    return next;
}

Site ArrowField::dual_step(std::int64_t l, Site j) const {
    if (is_forward_site(l, j)) throw LogicError("dual step from a forward site");
    const Site next = j - arrow(l - 1, j);
    check(l - 1, next);
    return next;
}

std::vector<Site> ArrowField::forward_walk(std::int64_t l0, Site j0, std::int64_t l1) const {
    if (l1 < l0) throw InputError("forward_walk needs l1 >= l0");
    check(l0, j0);
    std::vector<Site> out{j0};
    out.reserve(static_cast<std::size_t>(l1 - l0 + 1));
    for (std::int64_t l = l0; l < l1; ++l) out.push_back(forward_step(l, out.back()));
    return out;
}

std::vector<Site> ArrowField::dual_walk(std::int64_t l0, Site j0, std::int64_t l1) const {
    if (l1 > l0) throw InputError("dual_walk needs l1 <= l0");
    check(l0, j0);
    std::vector<Site> out{j0};
    out.reserve(static_cast<std::size_t>(l0 - l1 + 1));
    for (std::int64_t l = l0; l > l1; --l) out.push_back(dual_step(l, out.back()));
    return out;
}

Site ArrowField::snap_forward(std::int64_t l, double x) const noexcept {
    const Site p = l & 1;
    return 2 * static_cast<Site>(std::floor((x / dx_ - static_cast<double>(p)) / 2.0 + 0.5)) + p;
}

Site ArrowField::snap_dual(std::int64_t l, double x) const noexcept {
    const Site p = (l + 1) & 1;
    return 2 * static_cast<Site>(std::floor((x / dx_ - static_cast<double>(p)) / 2.0 + 0.5)) + p;
}

ArrowField build_arrow_field(double t_lo, double t_hi, double extent, double dt, std::uint64_t seed,
                             std::uint64_t replicate) {
    if (!(dt > 0.0)) throw InputError("build_arrow_field needs dt > 0");
    const double dx = std::sqrt(dt);
    const auto j_max = static_cast<Site>(std::floor(extent / dx));
    if (j_max < 1) throw RangeError("arrow field extent is smaller than one lattice site");
    return ArrowField(seed, replicate, dt, std::llround(t_lo / dt), std::llround(t_hi / dt), j_max);
}

std::size_t count_crossings(std::int64_t l_f, std::span<const Site> f, std::int64_t l_g, std::span<const Site> g) {
    const std::int64_t lo = std::max(l_f, l_g);
    const std::int64_t hi = std::min(l_f + static_cast<std::int64_t>(f.size()), l_g + static_cast<std::int64_t>(g.size())) - 1;
    std::size_t n = 0;
    for (std::int64_t l = lo; l <= hi; ++l) {
        const Site d = f[static_cast<std::size_t>(l - l_f)] - g[static_cast<std::size_t>(l - l_g)];
        if (d == 0) {
            ++n;
            continue;
        }
        if (l < hi) {
            const Site e = f[static_cast<std::size_t>(l + 1 - l_f)] - g[static_cast<std::size_t>(l + 1 - l_g)];
            if ((d < 0) != (e < 0) && e != 0) ++n;
        }
    }
    return n;
}

// ---------------------------------------------------------------- fractional steps

const char* to_string(Family f) { return f == Family::Forward ? "f" : "g"; }

Path DualSystem::path(Family f, std::size_t i) const {
    const auto& p = family(f).at(i);
    Path out;
    out.grid = TimeGrid(static_cast<double>(p.l_first) * field.dt(), field.dt(), p.sites.size() - 1);
    out.values.reserve(p.sites.size());
    for (Site j : p.sites) out.values.push_back(static_cast<double>(j) * field.dx());
    return out;
}

namespace {

class DriftSubsteps {
public:
    DriftSubsteps(const DualSystem& sys, int substeps)
        : sys_(sys), substeps_(substeps), inverse_(sys.drift.negated()), identity_(sys.drift.kind() == DriftSpec::Kind::Zero) {}

    Site parity(std::size_t m) const noexcept { return static_cast<Site>((m * sys_.lattice_steps) & 1u); }

    /// D_m on forward sites of parity p at the macro boundary m.
    Site jump(std::size_t m, Site x) const {
        if (identity_) return x;
        const double dx = sys_.field.dx();
        const double hx = ode_flow_h(sys_.drift, 0.0, sys_.macro_dt, static_cast<double>(x) * dx, substeps_) / dx;
        const Site p = parity(m);
        return 2 * static_cast<Site>(std::floor((hx - static_cast<double>(p)) / 2.0 + sys_.dither[m])) + p;
    }

    /// Dual site just above the last forward site that D_m sends below y.
    Site unjump(std::size_t m, Site y) const {
        if (identity_) return y;
        const double dx = sys_.field.dx();
        const double z = ode_flow_h(inverse_, 0.0, sys_.macro_dt, static_cast<double>(y) * dx, substeps_) / dx;
        const Site p = parity(m);
        Site g = 2 * floor_div2(z - static_cast<double>(p)) + p;
        while (jump(m, g) >= y) g -= 2;
        while (jump(m, g + 2) < y) g += 2;
        return g + 1;
    }

private:
    const DualSystem& sys_;
    int substeps_;
    DriftSpec inverse_;
    bool identity_;
};

struct Rep {
    Site j;
    std::size_t path;
};

// Drives one family through lattice time in its own direction. `advance`
// maps a representative's site at `l` to its site at the next time.
template <class Advance>
void run_family(std::vector<LatticePath>& paths, std::vector<CoalescenceEvent>& events,
                const std::vector<std::int64_t>& start_l, const std::vector<Site>& start_j, std::int64_t l_begin,
                std::int64_t l_end, double dt, Advance advance) {
    const int dir = l_end >= l_begin ? 1 : -1;
    std::vector<std::size_t> order(paths.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dir * start_l[a] < dir * start_l[b];
    });
    std::size_t next_start = 0;
    std::vector<Rep> reps;

    auto absorb = [&](std::size_t absorbed, std::size_t survivor, std::int64_t l) {
        paths[absorbed].merged_into = survivor;
        paths[absorbed].merge_l = l;
        events.push_back({static_cast<double>(l) * dt, static_cast<std::size_t>(std::llabs(l)), static_cast<ParticleId>(absorbed),
                          static_cast<ParticleId>(survivor)});
    };
    auto inject = [&](std::int64_t l) {
        while (next_start < order.size() && start_l[order[next_start]] == l) {
            const std::size_t id = order[next_start++];
            const Site j = start_j[id];
            paths[id].sites.push_back(j);
            auto it = std::lower_bound(reps.begin(), reps.end(), j, [](const Rep& r, Site v) { return r.j < v; });
            if (it != reps.end() && it->j == j) {
                if (id < it->path) {
                    absorb(it->path, id, l);
                    it->path = id;
                } else {
                    absorb(id, it->path, l);
                }
                continue;
            }
            reps.insert(it, Rep{j, id});
        }
    };

    inject(l_begin);
    for (std::int64_t l = l_begin; l != l_end; l += dir) {
        for (auto& r : reps) r.j = advance(l, r.j);
        for (const auto& r : reps) paths[r.path].sites.push_back(r.j);
        // Coalesce representatives that now share a site.
        std::vector<Rep> kept;
        kept.reserve(reps.size());
        for (std::size_t i = 0; i < reps.size();) {
            std::size_t k = i;
            std::size_t survivor = reps[i].path;
            while (k + 1 < reps.size() && reps[k + 1].j == reps[i].j) survivor = std::min(survivor, reps[++k].path);
            for (std::size_t q = i; q <= k; ++q) {
                if (reps[q].path != survivor) absorb(reps[q].path, survivor, l + dir);
            }
            kept.push_back({reps[i].j, survivor});
            i = k + 1;
        }
        reps = std::move(kept);
        inject(l + dir);
    }

    // Merged paths continue as their survivors; fill latest merges first so
    // every survivor is complete when it is copied.
    std::vector<std::size_t> merged;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        if (paths[i].merged_into) merged.push_back(i);
    }
    std::sort(merged.begin(), merged.end(), [&](std::size_t a, std::size_t b) {
        return dir * *paths[a].merge_l > dir * *paths[b].merge_l;
    });
    for (std::size_t id : merged) {
        auto& p = paths[id];
        const auto& s = paths[*p.merged_into];
        const std::int64_t s_first = start_l[s.id];
        for (std::int64_t l = *p.merge_l + dir; dir * l <= dir * l_end; l += dir) {
            p.sites.push_back(s.sites[static_cast<std::size_t>(dir * (l - s_first))]);
        }
    }
}

}  // namespace

DualSystem fractional_step_dual(const DriftSpec& drift, std::span<const StartPoint> forward_starts,
                                std::span<const StartPoint> backward_starts, std::size_t macro_steps,
                                std::uint64_t seed, const DualOptions& options) {
    if (macro_steps < 1) throw InputError("fractional_step_dual needs at least one macro step");
    if (options.lattice_steps < 1) throw InputError("fractional_step_dual needs at least one lattice step per macro step");
    if (!(options.horizon > 0.0)) throw InputError("fractional_step_dual needs horizon > 0");
    DualSystem sys;
    sys.drift = drift;
    sys.macro_steps = macro_steps;
    sys.lattice_steps = options.lattice_steps;
    sys.horizon = options.horizon;
    sys.macro_dt = options.horizon / static_cast<double>(macro_steps);
    const double dt = sys.macro_dt / static_cast<double>(options.lattice_steps);
    const std::int64_t L = sys.last_l();

    double extent = 0.0;
    if (options.extent) {
        extent = *options.extent;
    } else {
        double m = 0.0;
        for (const auto& s : forward_starts) m = std::max(m, std::abs(s.x));
        for (const auto& s : backward_starts) m = std::max(m, std::abs(s.x));
        extent = (m + 1.0) * std::exp(drift.lipschitz() * options.horizon) + 10.0 * std::sqrt(options.horizon) + 1.0;
    }
    sys.field = ArrowField(seed, options.replicate, dt, 0, L, static_cast<Site>(std::ceil(extent / std::sqrt(dt))) + 2);

    const NoiseStream dither(seed, {options.replicate, 0, Purpose::Dither});
    sys.dither.resize(macro_steps);
    for (std::size_t m = 0; m < macro_steps; ++m) sys.dither[m] = NoiseStream(dither).uniform_at(m);

    auto lattice_time = [&](double t) {
        const std::int64_t l = std::llround(t / dt);
        if (l < 0 || l > L || std::abs(static_cast<double>(l) * dt - t) > 1e-6 * dt + 1e-12) {
            throw RangeError("start time " + std::to_string(t) + " is not a lattice time in [0, horizon]");
        }
        return l;
    };
    auto check_site = [&](Site j) {
        if (j < -sys.field.j_max() || j > sys.field.j_max()) throw RangeError("start outside the lattice extent");
        return j;
    };

    const DriftSubsteps substeps(sys, options.rk4_substeps);
    const std::int64_t K = static_cast<std::int64_t>(options.lattice_steps);

    {
        std::vector<std::int64_t> ls;
        std::vector<Site> js;
        for (std::size_t i = 0; i < forward_starts.size(); ++i) {
            const auto l = lattice_time(forward_starts[i].time);
            ls.push_back(l);
            js.push_back(check_site(sys.field.snap_forward(l, forward_starts[i].x)));
            sys.forward.push_back({i, forward_starts[i], l, {}, {}, {}});
        }
        run_family(sys.forward, sys.forward_events, ls, js, 0, L, dt, [&](std::int64_t l, Site j) {
            if (l % K == 0) j = substeps.jump(static_cast<std::size_t>(l / K), j);
            return sys.field.forward_step(l, j);
        });
    }
    {
        std::vector<std::int64_t> ls;
        std::vector<Site> js;
        for (std::size_t i = 0; i < backward_starts.size(); ++i) {
            const auto l = lattice_time(backward_starts[i].time);
            ls.push_back(l);
            js.push_back(check_site(sys.field.snap_dual(l, backward_starts[i].x)));
            sys.backward.push_back({i, backward_starts[i], 0, {}, {}, {}});
        }
        run_family(sys.backward, sys.backward_events, ls, js, L, 0, dt, [&](std::int64_t l, Site j) {
            Site y = sys.field.dual_step(l, j);
            if ((l - 1) % K == 0) y = substeps.unjump(static_cast<std::size_t>((l - 1) / K), y);
            return y;
        });
        for (auto& p : sys.backward) std::reverse(p.sites.begin(), p.sites.end());
    }
    return sys;
}

CrossingAudit audit_crossings(const DualSystem& system) {
    CrossingAudit audit;
    for (const auto& f : system.forward) {
        for (const auto& g : system.backward) {
            const std::size_t n = count_crossings(f.l_first, f.sites, g.l_first, g.sites);
            ++audit.pairs_checked;
            const std::int64_t lo = std::max(f.l_first, g.l_first);
            const std::int64_t hi = std::min(f.l_first + static_cast<std::int64_t>(f.sites.size()),
                                             g.l_first + static_cast<std::int64_t>(g.sites.size())) - 1;
            if (hi > lo) audit.steps_checked += static_cast<std::size_t>(hi - lo);
            if (n == 0) continue;
            audit.crossings += n;
            if (audit.details.size() < kMaxCrossingDetails) {
                for (std::int64_t l = lo; l < hi; ++l) {
                    const Site d = f.sites[static_cast<std::size_t>(l - f.l_first)] - g.sites[static_cast<std::size_t>(l - g.l_first)];
                    const Site e = f.sites[static_cast<std::size_t>(l + 1 - f.l_first)] - g.sites[static_cast<std::size_t>(l + 1 - g.l_first)];
                    if (d == 0 || e == 0 || (d < 0) != (e < 0)) {
                        audit.details.push_back({f.id, g.id, l + 1});
                        break;
                    }
                }
            }
        }
    }
    return audit;
}

FamilyAudit audit_families(const DualSystem& system) {
    FamilyAudit audit;
    for (Family fam : {Family::Forward, Family::Backward}) {
        const auto& paths = system.family(fam);
        const bool fwd = fam == Family::Forward;
        auto site_at = [&](const LatticePath& p, std::int64_t l) { return p.sites[static_cast<std::size_t>(l - p.l_first)]; };
        auto start_l = [&](const LatticePath& p) {
            return fwd ? p.l_first : p.l_first + static_cast<std::int64_t>(p.sites.size()) - 1;
        };
        for (const auto& p : paths) {
            const Site expected = fwd ? system.field.snap_forward(start_l(p), p.start.x) : system.field.snap_dual(start_l(p), p.start.x);
            if (site_at(p, start_l(p)) != expected) ++audit.start_violations;
            if (p.merged_into) {
                const auto& s = paths[*p.merged_into];
                const std::int64_t from = *p.merge_l;
                const std::int64_t to = fwd ? system.last_l() : 0;
                for (std::int64_t l = from; fwd ? l <= to : l >= to; l += fwd ? 1 : -1) {
                    if (site_at(p, l) != site_at(s, l)) {
                        ++audit.absorbing_violations;
                        break;
                    }
                }
            }
        }
        // Order: weak order at one time is kept at the next time in the
        // family's direction.
        for (std::size_t a = 0; a < paths.size(); ++a) {
            for (std::size_t b = 0; b < paths.size(); ++b) {
                if (a == b) continue;
                const auto& p = paths[a];
                const auto& q = paths[b];
                const std::int64_t lo = std::max(p.l_first, q.l_first);
                const std::int64_t hi = std::min(p.l_first + static_cast<std::int64_t>(p.sites.size()),
                                                 q.l_first + static_cast<std::int64_t>(q.sites.size())) - 1;
                for (std::int64_t l = lo; l < hi; ++l) {
                    const std::int64_t now = fwd ? l : l + 1;
                    const std::int64_t next = fwd ? l + 1 : l;
                    if (site_at(p, now) <= site_at(q, now) && site_at(p, next) > site_at(q, next)) ++audit.order_violations;
                }
            }
        }
    }
    return audit;
}

std::vector<Path> distinct_segments(const DualSystem& system, Family family, std::size_t align) {
    if (align == 0) throw InputError("distinct_segments: align must be >= 1");
    std::vector<Path> out;
    const double dt = system.field.dt();
    const double dx = system.field.dx();
    const auto a = static_cast<std::int64_t>(align);
    for (const auto& p : system.family(family)) {
        Path seg;
        if (family == Family::Forward) {
            std::int64_t end = system.last_l();
            if (p.merge_l) end = std::min(end, p.l_first + (*p.merge_l - p.l_first + a - 1) / a * a);
            const auto n = static_cast<std::size_t>(end - p.l_first);
            seg.grid = TimeGrid(static_cast<double>(p.l_first) * dt, dt, n);
            for (std::size_t i = 0; i <= n; ++i) seg.values.push_back(static_cast<double>(p.sites[i]) * dx);
        } else {
            const std::int64_t start = p.l_first + static_cast<std::int64_t>(p.sites.size()) - 1;
            std::int64_t end = 0;
            if (p.merge_l) end = std::max<std::int64_t>(0, start - (start - *p.merge_l + a - 1) / a * a);
            const auto n = static_cast<std::size_t>(start - end);
            // Backward time runs from the horizon down.
            seg.grid = TimeGrid(static_cast<double>(system.last_l() - start) * dt, dt, n);
            for (std::int64_t l = start; l >= end; --l) seg.values.push_back(static_cast<double>(p.sites[static_cast<std::size_t>(l - p.l_first)]) * dx);
        }
        out.push_back(std::move(seg));
    }
    return out;
}

RegressionReport drift_regression(std::span<const Path> segments, std::size_t stride) {
    if (stride == 0) throw InputError("drift_regression: stride must be >= 1");
    double sxy = 0.0, sxx = 0.0;
    double step = 0.0;
    RegressionReport rep;
    for (const auto& seg : segments) {
        step = static_cast<double>(stride) * seg.grid.dt;
        for (std::size_t i = 0; i + stride < seg.values.size(); i += stride) {
            const double x = seg.values[i];
            sxy += x * (seg.values[i + stride] - x);
            sxx += x * x;
            ++rep.increments;
        }
    }
    if (rep.increments < 2 || sxx == 0.0) throw FitError("drift_regression: not enough informative increments");
    rep.slope = sxy / (step * sxx);
    double ss = 0.0;
    for (const auto& seg : segments) {
        for (std::size_t i = 0; i + stride < seg.values.size(); i += stride) {
            const double x = seg.values[i];
            const double r = seg.values[i + stride] - x - rep.slope * x * step;
            ss += r * r;
        }
    }
    const double sigma2 = ss / static_cast<double>(rep.increments - 1);
    rep.standard_error = std::sqrt(sigma2 / sxx) / step;
    rep.information = step * sxx;
    return rep;
}

void CovariationSlope::add(const CovariationSlope& other) {
    if (other.steps == 0) return;
    if (steps > 0 && std::abs(dt - other.dt) > 1e-12 * dt) throw InputError("cannot pool covariation slopes with different dt");
    dt = other.dt;
    steps += other.steps;
    sum += other.sum;
    sum_sq += other.sum_sq;
    finalize();
}

void CovariationSlope::finalize() {
    if (steps == 0 || dt <= 0.0) {
        slope = 0.0;
        standard_error = 0.0;
        return;
    }
    const double n = static_cast<double>(steps);
    const double mean = sum / n;
    slope = mean / dt;
    const double var = steps > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
    standard_error = std::sqrt(var / n) / dt;
}

CovariationReport quadratic_covariation(const Path& a, const Path& b) {
    if (!(a.grid == b.grid) || a.values.size() != b.values.size()) {
        throw InputError("quadratic_covariation needs paths on a common grid");
    }
    CovariationReport rep;
    const std::size_t n = a.values.size();
    for (std::size_t k = 0; k < n; ++k) {
        if (a.values[k] == b.values[k]) {
            rep.meeting_index = k;
            rep.meeting_time = a.grid.time(k);
            break;
        }
    }
    const std::size_t m = rep.meeting_index.value_or(n);
    rep.pre.dt = a.grid.dt;
    CovariationSlope post;
    post.dt = a.grid.dt;
    double cum = 0.0;
    rep.cumulative.push_back(0.0);
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double prod = (a.values[k + 1] - a.values[k]) * (b.values[k + 1] - b.values[k]);
        cum += prod;
        rep.cumulative.push_back(cum);
        auto& seg = k < m ? rep.pre : post;
        seg.sum += prod;
        seg.sum_sq += prod * prod;
        ++seg.steps;
    }
    rep.pre.finalize();
    if (rep.meeting_index) {
        post.finalize();
        rep.post = post;
    }
    return rep;
}

MartingaleReport martingale_diagnostic(std::span<const Path> segments, const DriftSpec& drift, std::size_t stride,
                                       double level) {
    if (stride == 0) throw InputError("martingale_diagnostic: stride must be >= 1");
    std::vector<std::vector<double>> ms;
    double step = 0.0;
    MartingaleReport rep;
    double sum = 0.0;
    for (const auto& seg : segments) {
        step = static_cast<double>(stride) * seg.grid.dt;
        std::vector<double> m;
        for (std::size_t i = 0; i + stride < seg.values.size(); i += stride) {
            const double x = seg.values[i];
            m.push_back(seg.values[i + stride] - x - drift(x) * step);
            sum += m.back();
        }
        rep.increments += m.size();
        ms.push_back(std::move(m));
    }
    if (rep.increments < 3) throw InputError("martingale_diagnostic needs at least three increments");
    const double n = static_cast<double>(rep.increments);
    rep.mean = sum / n;
    double ss = 0.0, lag = 0.0;
    std::size_t pairs = 0;
    for (const auto& m : ms) {
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double d = m[i] - rep.mean;
            ss += d * d;
            if (i + 1 < m.size()) {
                lag += d * (m[i + 1] - rep.mean);
                ++pairs;
            }
        }
    }
    rep.variance = ss / (n - 1.0);
    rep.expected_variance = step;
    const double q = normal_quantile_upper(level);
    rep.z = rep.variance > 0.0 ? rep.mean / std::sqrt(rep.variance / n) : 0.0;
    rep.mean_ok = std::abs(rep.z) <= q;

    const boost::math::chi_squared chi(n - 1.0);
    rep.chi2 = ss / step;
    rep.chi2_low = boost::math::quantile(chi, level / 2.0);
    rep.chi2_high = boost::math::quantile(boost::math::complement(chi, level / 2.0));
    rep.variance_ok = rep.chi2 >= rep.chi2_low && rep.chi2 <= rep.chi2_high;

    rep.lag1 = ss > 0.0 ? lag / ss : 0.0;
    rep.lag1_z = rep.lag1 * std::sqrt(static_cast<double>(pairs));
    rep.lag1_ok = pairs == 0 || std::abs(rep.lag1_z) <= q;
    return rep;
}

// ---------------------------------------------------------------- non-existence

NonexistenceReport nonexistence_demo(const ArrowField& field, double a, double b, double horizon) {
    if (b < a) throw InputError("nonexistence_demo needs a <= b");
    NonexistenceReport rep;
    const Site ja = field.snap_dual(0, a);
    const Site jb = field.snap_dual(0, b);
    rep.a = static_cast<double>(ja) * field.dx();
    rep.b = static_cast<double>(jb) * field.dx();
    if (ja >= jb) {
        rep.degenerate = true;
        return rep;
    }
    const std::int64_t l_min = std::max<std::int64_t>(field.l_lo(), -std::llround(horizon / field.dt()));
    if (field.l_hi() < 0) throw RangeError("nonexistence_demo: the field must contain time 0");

    // ga[i], gb[i] are the dual walks at time -i.
    std::vector<Site> ga{ja}, gb{jb};
    std::int64_t l = 0;
    while (ga.back() != gb.back() && l > l_min) {
        ga.push_back(field.dual_step(l, ga.back()));
        gb.push_back(field.dual_step(l, gb.back()));
        --l;
    }
    if (ga.back() != gb.back()) {
        rep.inconclusive = true;
        return rep;
    }
    const std::int64_t l_meet = l;
    rep.meeting_time = -static_cast<double>(l_meet) * field.dt();

    // Forward walk through the single forward site left between the dual
    // walks one step after they meet.
    {
        const auto idx = static_cast<std::size_t>(-(l_meet + 1));
        const Site j0 = ga[idx] + 1;
        const auto fw = field.forward_walk(l_meet + 1, j0, 0);
        std::size_t adjacent = 0;
        for (std::size_t i = 0; i < fw.size(); ++i) {
            const auto k = static_cast<std::size_t>(-(l_meet + 1 + static_cast<std::int64_t>(i)));
            if (std::llabs(fw[i] - ga[k]) == 1 || std::llabs(fw[i] - gb[k]) == 1) ++adjacent;
        }
        rep.threaded_end = static_cast<double>(fw.back()) * field.dx();
        rep.adjacency_fraction = static_cast<double>(adjacent) / static_cast<double>(fw.size());
    }

    // Start times before the meeting: the forward sites flanking the merged
    // dual walk bound every other forward start by monotonicity.
    const std::int64_t l_stop = std::max(l_min, 2 * l_meet - 1);
    std::vector<std::int64_t> starts;
    for (int i = 0; i <= 16; ++i) {
        const double frac = i / 16.0;
        starts.push_back(l_meet - static_cast<std::int64_t>(std::llround(frac * static_cast<double>(l_meet - l_stop))));
    }
    starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
    Site g = ga.back();
    std::int64_t lg = l_meet;
    for (std::int64_t ls : starts) {
        while (lg > ls) {
            g = field.dual_step(lg, g);
            --lg;
        }
        for (Site j0 : {g - 1, g + 1}) {
            const Site end = field.forward_walk(ls, j0, 0).back();
            if (end > ja && end < jb) ++rep.reachable_from_before;
        }
        ++rep.start_times_checked;
    }
    return rep;
}

// ---------------------------------------------------------------- non-meeting

NonMeetingReport nonmeeting_check(const DriftSpec& drift, double u1, double u2, std::span<const double> horizons,
                                  std::size_t replicates, std::uint64_t seed, double dt) {
    if (horizons.empty()) throw InputError("nonmeeting_check needs at least one horizon");
    if (replicates == 0) throw InputError("nonmeeting_check needs replicates > 0");
    NonMeetingReport rep;
    rep.horizons.assign(horizons.begin(), horizons.end());
    std::sort(rep.horizons.begin(), rep.horizons.end());
    const double h_max = rep.horizons.back();
    const auto steps = static_cast<std::size_t>(std::ceil(h_max / dt - 1e-9));
    const TimeGrid grid(0.0, dt, steps);
    const DriftSpec repelling = drift.negated();
    std::vector<std::size_t> alive(rep.horizons.size(), 0);
    for (std::size_t r = 0; r < replicates; ++r) {
        const auto tau = meeting_time(repelling, u1, u2, grid, seed, r);
        for (std::size_t i = 0; i < rep.horizons.size(); ++i) {
            if (!tau || *tau > rep.horizons[i]) ++alive[i];
        }
    }
    for (std::size_t i = 0; i < rep.horizons.size(); ++i) rep.survival.push_back(TailEstimate::from_counts(alive[i], replicates));
    const auto& first = rep.survival.front();
    const auto& last = rep.survival.back();
    rep.positive = last.ci_low > 0.0;
    rep.plateau = last.probability >= first.probability - 3.0 * first.standard_error();
    rep.decreasing = last.probability < first.probability - 3.0 * first.standard_error();
    return rep;
}

void write_dual_csv(std::ostream& os, const DualSystem& system, std::size_t stride) {
    if (stride == 0) throw InputError("write_dual_csv: stride must be >= 1");
    os << "time,family,path_id,position\n";
    for (Family fam : {Family::Forward, Family::Backward}) {
        for (const auto& p : system.family(fam)) {
            for (std::size_t i = 0; i < p.sites.size(); i += stride) {
                const std::int64_t l = p.l_first + static_cast<std::int64_t>(i);
                put_double(os, static_cast<double>(l) * system.field.dt());
                os << ',' << to_string(fam) << ',' << p.id << ',';
                put_double(os, static_cast<double>(p.sites[i]) * system.field.dx());
                os << '\n';
            }
        }
    }
}

}  // namespace coalflow
