#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "coalflow/analysis.hpp"
#include "coalflow/coalescing.hpp"
#include "coalflow/errors.hpp"

using namespace coalflow;

TEST(DetectMeeting, SignChangeAndBridge) {
    EXPECT_TRUE(detect_meeting(0.0, 1.0, 1.0, 0.5, 0.01, 0.99));   // crossed
    EXPECT_TRUE(detect_meeting(0.0, 0.5, 1.0, 0.5, 0.01, 0.99));   // touch
    EXPECT_FALSE(detect_meeting(0.0, 0.0, 1.0, 1.0, 0.01, 1e-12));  // far apart
    // d_prev = d_next = -0.1, dt = 0.01: crossing probability e^{-1}.
    const double p = bridge_crossing_probability(-0.1, -0.1, 0.01);
    EXPECT_DOUBLE_EQ(p, std::exp(-1.0));
    EXPECT_TRUE(detect_meeting(0.0, 0.0, 0.1, 0.1, 0.01, p * 0.999));
    EXPECT_FALSE(detect_meeting(0.0, 0.0, 0.1, 0.1, 0.01, p * 1.001));
    EXPECT_FALSE(detect_meeting(0.0, 0.0, 0.1, 0.1, 0.01, 0.0001, false));
    EXPECT_EQ(bridge_crossing_probability(-0.1, 0.1, 0.01), 1.0);
}

TEST(Meeting, FastPathMatchesEngine) {
    const TimeGrid g(0.0, 0.01, 1000);
    for (const char* d : {"linear:-1", "zero", "linsin:-1:0.3"}) {
        const auto drift = DriftSpec::parse(d);
        for (std::uint64_t r = 0; r < 200; ++r) {
            for (bool bridge : {true, false}) {
                EXPECT_EQ(meeting_time(drift, 0.0, 1.0, g, 5, r, bridge), meeting_time_engine(drift, 0.0, 1.0, g, 5, r, bridge))
                    << d << " replicate " << r;
            }
        }
    }
    EXPECT_EQ(*meeting_time(DriftSpec::zero(), 0.5, 0.5, g, 1, 0), 0.0);
}

// Reflection-principle oracle: P(tau <= t) = 2 Phi(-gap / sqrt(2 t)).
TEST(Meeting, ZeroDriftLawMatchesBrownianOracle) {
    const TimeGrid g(0.0, 0.001, 20000);
    std::vector<double> samples;
    for (std::uint64_t r = 0; r < 5000; ++r) {
        const auto t = meeting_time(DriftSpec::zero(), 0.0, 1.0, g, 11, r);
        samples.push_back(t ? *t : INFINITY);
    }
    const auto ks = ks_test(samples, [](double t) { return brownian_meeting_cdf(1.0, t); }, 20.0);
    EXPECT_GT(ks.p_value, 0.001) << "D = " << ks.statistic;
}

TEST(Meeting, LinearDriftLawMatchesOuOracle) {
    const TimeGrid g(0.0, 0.001, 10000);
    std::vector<double> samples;
    for (std::uint64_t r = 0; r < 5000; ++r) {
        const auto t = meeting_time(DriftSpec::linear(-1.0), 0.0, 1.0, g, 12, r);
        samples.push_back(t ? *t : INFINITY);
    }
    const auto ks = ks_test(samples, [](double t) { return ou_hitting_cdf(1.0, 1.0, t); }, 10.0);
    EXPECT_GT(ks.p_value, 0.001) << "D = " << ks.statistic;
}

TEST(Engine, InvariantsHoldOnRandomSystems) {
    std::vector<double> starts;
    for (int i = 0; i < 40; ++i) starts.push_back(-2.0 + 0.1 * i);
    for (const char* d : {"zero", "linear:-1", "linsin:-2:0.5"}) {
        for (std::uint64_t r = 0; r < 5; ++r) {
            const auto sys = simulate_n_point(DriftSpec::parse(d), starts, TimeGrid(0.0, 0.01, 400), 21, r);
            const auto inv = check_invariants(sys);
            EXPECT_EQ(inv.total(), 0u) << d;
            EXPECT_GT(inv.checked_steps, 0u);
        }
    }
}

TEST(Engine, SinglePointHasNoEvents) {
    const auto sys = simulate_n_point(DriftSpec::zero(), std::vector<double>{0.0}, TimeGrid(0.0, 0.01, 100), 1);
    EXPECT_TRUE(sys.events().empty());
    EXPECT_EQ(sys.trajectory(0).values.size(), 101u);
}

TEST(Engine, EqualStartsMergeImmediately) {
    CoalescingEngine e(DriftSpec::zero(), TimeGrid(0.0, 0.01, 10), 1, 0);
    const auto a = e.inject(0.3);
    const auto b = e.inject(0.3);
    EXPECT_EQ(e.live_count(), 1u);
    while (!e.finished()) e.step();
    const auto sys = std::move(e).finish();
    ASSERT_EQ(sys.events().size(), 1u);
    EXPECT_EQ(sys.events()[0].survivor, a);
    EXPECT_EQ(sys.events()[0].absorbed, b);
    for (std::size_t k = 0; k <= sys.last_step(); ++k) EXPECT_EQ(sys.value_at(a, k), sys.value_at(b, k));
}

TEST(Engine, ManualMerge) {
    CoalescingEngine e(DriftSpec::zero(), TimeGrid(0.0, 0.01, 10), 1, 0);
    const auto a = e.inject(0.0);
    const auto b = e.inject(1.0);
    const auto c = e.inject(2.0);
    EXPECT_THROW(e.merge(a, c), LogicError);
    e.merge(c, b);
    EXPECT_EQ(e.live_count(), 2u);
    const auto sys = std::move(e).finish();
    EXPECT_EQ(sys.value_at(b, 0), 1.5);
    EXPECT_EQ(sys.resolve(c, 0), b);
}

TEST(Engine, MergedRunSitsAtMemberMean) {
    // Three particles squeezed into one step usually all meet; the survivor
    // then sits at the mean of the three endpoints.
    const double dt = 1e-8, sd = std::sqrt(dt);
    const std::vector<double> x0{-1e-9, 0.0, 1e-9};
    bool seen = false;
    for (std::uint64_t seed = 1; seed <= 50 && !seen; ++seed) {
        CoalescingEngine e(DriftSpec::zero(), TimeGrid(0.0, dt, 1), seed, 0);
        for (double x : x0) e.inject(x);
        e.step();
        if (e.live_count() != 1) continue;
        seen = true;
        const auto sys = std::move(e).finish();
        double sum = 0.0;
        for (std::uint64_t i = 0; i < 3; ++i) {
            NoiseStream s(seed, {0, i, Purpose::Motion});
            sum += x0[i] + sd * s.gaussian_at(0);
        }
        EXPECT_NEAR(sys.value_at(0, 1), sum / 3.0, 1e-15);
        EXPECT_EQ(sys.value_at(2, 1), sys.value_at(0, 1));
    }
    EXPECT_TRUE(seen);
}

// Simulating a subset of the starts with the same per-particle streams gives
// the same trajectories up to the first merge that involves an excluded particle.
TEST(Engine, PermutationConsistency) {
    const std::vector<double> all{-1.0, 0.0, 1.0, 2.0};
    const TimeGrid g(0.0, 0.01, 300);
    const auto full = simulate_n_point(DriftSpec::linear(-1.0), all, g, 4, 0);
    // Particles 0 and 1 keep their ids (0, 1) when injected alone.
    const auto sub = simulate_n_point(DriftSpec::linear(-1.0), std::vector<double>{-1.0, 0.0}, g, 4, 0);
    std::size_t horizon = g.n_steps;
    for (const auto& ev : full.events()) {
        if (ev.absorbed >= 2 || ev.survivor >= 2) horizon = std::min(horizon, ev.step);
    }
    for (ParticleId id : {0u, 1u}) {
        for (std::size_t k = 0; k < horizon; ++k) EXPECT_EQ(full.value_at(id, k), sub.value_at(id, k)) << id << " " << k;
    }
}

TEST(Engine, InputErrors) {
    EXPECT_THROW(simulate_n_point(DriftSpec::zero(), std::vector<double>{1.0, 0.0}, TimeGrid(0, 0.1, 2), 1), InputError);
    EXPECT_THROW(simulate_n_point(DriftSpec::zero(), std::vector<double>{}, TimeGrid(0, 0.1, 2), 1), InputError);
    CoalescingEngine e(DriftSpec::zero(), TimeGrid(0.0, 0.1, 1), 1, 0);
    EXPECT_THROW(e.inject(NAN), InputError);
    e.inject(0.0);
    e.step();
    EXPECT_THROW(e.step(), LogicError);
}

TEST(Engine, LiveCapRaises) {
    EngineOptions o;
    o.live_cap = 3;
    CoalescingEngine e(DriftSpec::zero(), TimeGrid(0.0, 0.1, 1), 1, 0, o);
    for (int i = 0; i < 3; ++i) e.inject(i);
    EXPECT_THROW(e.inject(10.0), ResourceError);
}

TEST(SecondMoment, LinearDriftIsBounded) {
    const std::vector<double> xs{0.0, 2.0};
    const std::vector<double> ts{0.5, 2.0};
    const auto scan = second_moment_scan(DriftSpec::linear(-1.0), xs, ts, 4000, 0.01, 3);
    for (const auto& p : scan.points) {
        // E X^2 = x^2 e^{-2t} + (1 - e^{-2t}) / 2 for the continuum OU.
        const double want = p.x * p.x * std::exp(-2.0 * p.t) + (1.0 - std::exp(-2.0 * p.t)) / 2.0;
        EXPECT_NEAR(p.estimate.mean, want, 5.0 * p.estimate.standard_error + 0.02);
    }
    EXPECT_LT(scan.fitted_constant, 2.0);
    EXPECT_THROW(second_moment_diag(DriftSpec::zero(), 0.0, 1.0, 10, 0.01, 1), ParameterError);
}

TEST(DetectMeeting, ExamplePairs) {
    // d_prev = 0.5, d_next = -0.3: sign flip.
    EXPECT_TRUE(detect_meeting(0.5, -0.3, 0.0, 0.0, 0.01, 0.999));
    // d = 1 at both ends: crossing probability e^{-100}.
    EXPECT_NEAR(bridge_crossing_probability(1.0, 1.0, 0.01), std::exp(-100.0), 1e-50);
}

TEST(Engine, ThreeParticlesTwoMerges) {
    CoalescingEngine e(DriftSpec::zero(), TimeGrid(0.0, 0.01, 10), 1, 0);
    const auto a = e.inject(0.0), b = e.inject(1.0), c = e.inject(2.0);
    e.merge(a, b);
    e.merge(a, c);
    EXPECT_EQ(e.live_count(), 1u);
    while (!e.finished()) e.step();
    const auto sys = std::move(e).finish();
    EXPECT_EQ(sys.events().size(), 2u);
    for (std::size_t k = 1; k <= sys.last_step(); ++k) {
        EXPECT_EQ(sys.value_at(b, k), sys.value_at(a, k));
        EXPECT_EQ(sys.value_at(c, k), sys.value_at(a, k));
    }
}

namespace {

// Brute force three-particle coalescing Brownian motions: every pair is
// tested separately and a met pair is fused for the rest of the run.
double brute_force_live_count(std::uint64_t r, double dt, int steps) {
    NoiseStream s(77, {r, 0, Purpose::Test}), u(77, {r, 1, Purpose::Test});
    std::vector<double> x{0.0, 0.5, 1.0};
    std::vector<int> group{0, 1, 2};
    for (int k = 0; k < steps; ++k) {
        std::vector<double> step(3);
        for (int i = 0; i < 3; ++i) step[i] = std::sqrt(dt) * s.gaussian();
        std::vector<double> next(3);
        for (int i = 0; i < 3; ++i) next[i] = x[i] + step[group[i]];
        for (int i = 0; i < 3; ++i) {
            for (int j = i + 1; j < 3; ++j) {
                if (group[i] == group[j]) continue;
                const double dp = x[i] - x[j], dn = next[i] - next[j];
                const bool met = dp * dn <= 0.0 || u.uniform() < std::exp(-dp * dn / dt);
                if (!met) continue;
                const int keep = std::min(group[i], group[j]), drop = std::max(group[i], group[j]);
                const double mid = 0.5 * (next[i] + next[j]);
                for (int q = 0; q < 3; ++q) {
                    if (group[q] == drop) group[q] = keep;
                    if (group[q] == keep) next[q] = mid;
                }
            }
        }
        x = next;
    }
    std::vector<int> g = group;
    std::sort(g.begin(), g.end());
    return static_cast<double>(std::unique(g.begin(), g.end()) - g.begin());
}

}  // namespace

TEST(Engine, LiveCountMatchesBruteForceAtThreePoints) {
    const int n = 4000, steps = 100;
    const double dt = 0.01;
    double engine = 0, engine2 = 0, brute = 0, brute2 = 0;
    for (int r = 0; r < n; ++r) {
        const auto sys = simulate_n_point(DriftSpec::zero(), std::vector<double>{0.0, 0.5, 1.0},
                                          TimeGrid(0.0, dt, steps), 78, r);
        const double a = static_cast<double>(sys.live_count(steps));
        const double b = brute_force_live_count(r, dt, steps);
        engine += a, engine2 += a * a, brute += b, brute2 += b * b;
    }
    engine /= n, brute /= n;
    const double se = std::sqrt((engine2 / n - engine * engine + brute2 / n - brute * brute) / n);
    EXPECT_NEAR(engine, brute, 4.0 * se);
}

TEST(Engine, LiveCountDecaysUnderZeroDrift) {
    std::vector<double> starts;
    for (int i = 0; i < 50; ++i) starts.push_back(-2.5 + 0.1 * i);
    const auto sys = simulate_n_point(DriftSpec::zero(), starts, TimeGrid(0.0, 0.01, 1000), 5);
    EXPECT_LT(sys.live_count(100), 50u);
    EXPECT_LE(sys.live_count(1000), sys.live_count(100));
    EXPECT_LT(sys.live_count(1000), 10u);
}

TEST(SecondMoment, ExactStartAndStationaryLimit) {
    const auto at0 = second_moment_diag(DriftSpec::linear(-1.0), 5.0, 0.0, 100, 0.01, 1);
    EXPECT_EQ(at0.mean, 25.0);
    const auto late = second_moment_diag(DriftSpec::linear(-1.0), 0.0, 8.0, 20000, 0.01, 2);
    EXPECT_NEAR(late.mean, 0.5, 4.0 * late.standard_error + 0.005);
    const std::vector<double> xs{10.0}, ts{1.0, 2.0, 4.0, 8.0};
    const auto scan = second_moment_scan(DriftSpec::parse("linsin:-1:0.3"), xs, ts, 2000, 0.01, 3);
    for (const auto& p : scan.points) EXPECT_LE(p.estimate.mean, scan.fitted_constant * (1.0 + p.x * p.x) + 1e-12);
}
