#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "coalflow/analysis.hpp"
#include "coalflow/errors.hpp"
#include "coalflow/noise.hpp"
#include "coalflow/sde.hpp"

using namespace coalflow;

TEST(OuHitting, DensityIntegratesToCdf) {
    // Trapezoid integral of the density against the quadrature CDF.
    const double lambda = 1.0, gap = 1.0;
    const int n = 200000;
    const double h = 5.0 / n;
    double acc = 0.0;
    for (int i = 1; i <= n; ++i) {
        const double a = (i - 1) * h, b = i * h;
        const double fa = a > 0 ? ou_hitting_density(lambda, gap, a) : 0.0;
        acc += 0.5 * h * (fa + ou_hitting_density(lambda, gap, b));
    }
    EXPECT_NEAR(acc, ou_hitting_cdf(lambda, gap, 5.0), 1e-6);
}

TEST(OuHitting, SmallTimeMatchesBrownianFirstPassage) {
    // For t -> 0 the drift is negligible: first passage of a diffusion with
    // coefficient 2 over distance gap.
    const double gap = 0.1, t = 1e-3;
    const double bm = gap / (std::sqrt(4.0 * std::numbers::pi) * std::pow(t, 1.5)) * std::exp(-gap * gap / (4.0 * t));
    EXPECT_NEAR(ou_hitting_density(1.0, gap, t) / bm, 1.0, 0.01);
}

TEST(OuHitting, ComplementAndMonotonicity) {
    for (double lambda : {0.3, 1.0, 3.0}) {
        for (double gap : {0.2, 1.0, 4.0}) {
            double prev = 0.0;
            for (double t : {0.05, 0.2, 1.0, 3.0, 10.0}) {
                const double F = ou_hitting_cdf(lambda, gap, t);
                EXPECT_NEAR(F + ou_hitting_tail(lambda, gap, t), 1.0, 1e-8);
                EXPECT_NEAR(F, ou_hitting_cdf_closed(lambda, gap, t), 1e-10);
                EXPECT_GE(F, prev);
                prev = F;
            }
            EXPECT_GT(ou_hitting_cdf_closed(lambda, gap * 0.5, 1.0), ou_hitting_cdf_closed(lambda, gap, 1.0));
        }
    }
    EXPECT_EQ(ou_hitting_cdf_closed(1.0, 1.0, 0.0), 0.0);
    EXPECT_THROW(ou_hitting_density(0.0, 1.0, 1.0), InputError);
    EXPECT_THROW(ou_hitting_density(1.0, -1.0, 1.0), InputError);
    EXPECT_THROW(ou_hitting_cdf_closed(-1.0, 1.0, 1.0), InputError);
}

// Independent route: exact OU transitions for Z = (X - Y) / sqrt(2) with a
// bridge-corrected zero test, compared at two times.
TEST(OuHitting, MatchesExactStepSimulation) {
    const double lambda = 1.0, gap = 1.0, dt = 1e-3;
    const int n = 20000;
    int hit1 = 0, hit3 = 0;
    for (int r = 0; r < n; ++r) {
        NoiseStream s(99, {static_cast<std::uint64_t>(r), 0, Purpose::Test});
        NoiseStream u(99, {static_cast<std::uint64_t>(r), 1, Purpose::Test});
        double z = gap / std::sqrt(2.0);
        double tau = INFINITY;
        for (int k = 0; k < 3000; ++k) {
            const double zn = ou_exact_step(lambda, z, dt, s.gaussian());
            if (zn <= 0.0 || u.uniform() < std::exp(-2.0 * z * zn / dt)) {
                tau = (k + 1) * dt;
                break;
            }
            z = zn;
        }
        hit1 += tau <= 1.0;
        hit3 += tau <= 3.0;
    }
    for (auto [hits, t] : {std::pair{hit1, 1.0}, std::pair{hit3, 3.0}}) {
        const double p = ou_hitting_cdf_closed(lambda, gap, t);
        const double se = std::sqrt(p * (1 - p) / n);
        EXPECT_NEAR(static_cast<double>(hits) / n, p, 4.0 * se) << "t = " << t;
    }
}

TEST(BrownianMin, ValueAndSimulation) {
    EXPECT_NEAR(brownian_min_tail(-2.0, 1.0), 2.0 * normal_cdf(-2.0), 1e-15);
    EXPECT_NEAR(brownian_min_tail(-2.0, 1.0), 0.04550026389635842, 1e-12);
    EXPECT_NEAR(brownian_meeting_cdf(1.0, 0.5), 2.0 * normal_cdf(-1.0), 1e-15);
    // Random walk minimum with bridge correction.
    const int n = 20000, steps = 1000;
    const double dt = 1.0 / steps, level = -1.0;
    int hits = 0;
    for (int r = 0; r < n; ++r) {
        NoiseStream s(5, {static_cast<std::uint64_t>(r), 0, Purpose::Test});
        NoiseStream u(5, {static_cast<std::uint64_t>(r), 1, Purpose::Test});
        double w = 0.0;
        for (int k = 0; k < steps; ++k) {
            const double wn = w + std::sqrt(dt) * s.gaussian();
            if (wn <= level || u.uniform() < std::exp(-2.0 * (w - level) * (wn - level) / dt)) {
                ++hits;
                break;
            }
            w = wn;
        }
    }
    const double p = brownian_min_tail(level, 1.0);
    EXPECT_NEAR(static_cast<double>(hits) / n, p, 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST(Wilson, Properties) {
    const auto a = wilson_interval(0, 100);
    EXPECT_EQ(a.low, 0.0);
    EXPECT_GT(a.high, 0.0);
    const auto b = wilson_interval(100, 100);
    EXPECT_LT(b.low, 1.0);
    EXPECT_DOUBLE_EQ(b.high, 1.0);
    const auto c = wilson_interval(30, 100);
    EXPECT_LT(c.low, 0.3);
    EXPECT_GT(c.high, 0.3);
    const auto d = wilson_interval(300, 1000);
    EXPECT_LT(d.high - d.low, c.high - c.low);
    const auto e = TailEstimate::from_counts(30, 100);
    EXPECT_DOUBLE_EQ(e.probability, 0.3);
    EXPECT_NEAR(e.standard_error(), std::sqrt(0.3 * 0.7 / 100), 1e-15);
}

TEST(Ks, NullRejectionRateNearLevel) {
    int rejects = 0;
    const int trials = 400;
    for (int t = 0; t < trials; ++t) {
        NoiseStream s(17, {static_cast<std::uint64_t>(t), 0, Purpose::Test});
        std::vector<double> xs(500);
        for (auto& x : xs) x = s.uniform();
        if (ks_test(xs, [](double x) { return std::clamp(x, 0.0, 1.0); }).p_value < 0.05) ++rejects;
    }
    // Binomial(400, 0.05): mean 20, sd 4.4.
    EXPECT_GT(rejects, 5);
    EXPECT_LT(rejects, 38);
}

TEST(Ks, DetectsShiftAndCensoring) {
    NoiseStream s(18, {0, 0, Purpose::Test});
    std::vector<double> xs(2000);
    for (auto& x : xs) x = s.gaussian() + 0.2;
    EXPECT_LT(ks_test(xs, normal_cdf).p_value, 1e-6);
    for (auto& x : xs) x -= 0.2;
    EXPECT_GT(ks_test(xs, normal_cdf).p_value, 1e-3);
    // Everything beyond the censoring point carries no information below it.
    std::vector<double> late(100, 50.0);
    EXPECT_NEAR(ks_test(late, [](double t) { return t / 100.0; }, 10.0).statistic, 0.1, 1e-12);
    // A sample that sits wholly below the support is maximally wrong.
    std::vector<double> low(100, -5.0);
    EXPECT_NEAR(ks_test(low, [](double t) { return t < 0 ? 0.0 : std::min(t, 1.0); }).statistic, 1.0, 1e-12);
    EXPECT_THROW(ks_test(std::vector<double>(10, 0.0), normal_cdf), InputError);
}

TEST(ExpFit, RecoversExactModelAndRejectsBadInput) {
    std::vector<std::pair<double, double>> pts;
    for (double s = 1; s <= 6; ++s) pts.emplace_back(s, 2.0 * std::exp(-0.7 * s));
    const auto f = exp_fit(pts);
    EXPECT_NEAR(f.rate, 0.7, 1e-12);
    EXPECT_NEAR(f.constant, 2.0, 1e-12);
    EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
    EXPECT_FALSE(f.low_r_squared);
    EXPECT_THROW(exp_fit(std::vector<std::pair<double, double>>{{1.0, 0.5}}), FitError);
    EXPECT_THROW(exp_fit(std::vector<std::pair<double, double>>{{1.0, 0.0}, {2.0, 0.0}, {3.0, 0.0}}), FitError);
}

TEST(Escape, ParameterChecks) {
    const auto drift = DriftSpec::parse("linsin:-1:0.3");
    EXPECT_NEAR(escape_min_start(drift, 2.0), std::max(2.0, 2.0 * (std::exp(1.3) * 2.0)), 1e-12);
    EXPECT_THROW(escape_probability(DriftSpec::zero(), 2.0, 10.0, 100, 1), ParameterError);
    EXPECT_THROW(escape_probability(drift, 2.0, 3.0, 100, 1), ParameterError);
    EscapeOptions loose;
    loose.enforce_valid_range = false;
    const auto r = escape_probability(drift, 2.0, 3.0, 2000, 1, loose);
    EXPECT_FALSE(r.in_valid_range);
    EXPECT_NEAR(r.level, -1.5, 1e-15);
    EXPECT_NEAR(r.horizon, std::expm1(2.6) / 2.6, 1e-12);
}

TEST(OuHitting, Limits) {
    EXPECT_NEAR(ou_hitting_tail(1.0, 1.0, 1e-6), 1.0, 1e-12);
    EXPECT_NEAR(brownian_min_tail(-1e-12, 1.0), 1.0, 1e-9);
}

TEST(Escape, TinyBoundIsUnresolvable) {
    const auto r = escape_probability(DriftSpec::parse("linsin:-1:0.3"), 2.0, 40.0, 10000, 3);
    EXPECT_LT(r.bound, 1e-9);
    EXPECT_EQ(r.estimate.hits, 0u);
    EXPECT_EQ(r.verdict, EscapeReport::Verdict::Unresolvable);
}

TEST(ExpFit, NoisyConstantIsFlat) {
    std::vector<std::pair<double, double>> pts;
    NoiseStream s(6, {0, 0, Purpose::Test});
    for (double x = 1; x <= 6; ++x) pts.emplace_back(x, 0.5 * (1.0 + 0.05 * s.gaussian()));
    const auto f = exp_fit(pts);
    EXPECT_LT(std::abs(f.rate), 0.05);
    EXPECT_TRUE(f.low_r_squared);
}
