#include <gtest/gtest.h>

#include <cmath>

#include "coalflow/errors.hpp"
#include "coalflow/sde.hpp"

using namespace coalflow;

TEST(TimeGrid, IndexOf) {
    const TimeGrid g(-2.0, 0.01, 300);
    EXPECT_EQ(g.index_of(-2.0), 0u);
    EXPECT_EQ(g.index_of(0.0), 200u);
    EXPECT_EQ(g.index_of(1.0), 300u);
    EXPECT_THROW(g.index_of(1.01), RangeError);
    EXPECT_THROW(g.index_of(0.005), RangeError);
    EXPECT_THROW(TimeGrid(0.0, 0.0, 3), InputError);
}

TEST(Path, Reversed) {
    Path p{TimeGrid(1.0, 0.5, 2), {1.0, 2.0, 3.0}};
    EXPECT_TRUE(p.well_formed());
    const auto r = reversed(p);
    EXPECT_EQ(r.values, (std::vector<double>{3.0, 2.0, 1.0}));
    EXPECT_DOUBLE_EQ(r.grid.t_start, 2.0);
    Path bad{TimeGrid(0.0, 1.0, 2), {0.0, NAN, 1.0}};
    EXPECT_FALSE(bad.well_formed());
}

// Euler for dX = -X dt + dw from x0: mean x0 (1-dt)^n, variance dt sum (1-dt)^{2k}.
TEST(IntegrateSde, LinearDriftMomentsMatchEulerRecursion) {
    const auto drift = DriftSpec::linear(-1.0);
    const TimeGrid g(0.0, 0.01, 100);
    const int n = 20000;
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < n; ++r) {
        NoiseStream s(3, {static_cast<std::uint64_t>(r), 0, Purpose::Test});
        const double x = integrate_sde(drift, 2.0, g, s).values.back();
        sum += x;
        sum2 += x * x;
    }
    const double mean = sum / n, var = sum2 / n - mean * mean;
    const double a = 0.99;
    const double want_mean = 2.0 * std::pow(a, 100);
    const double want_var = 0.01 * (1.0 - std::pow(a, 200)) / (1.0 - a * a);
    EXPECT_NEAR(mean, want_mean, 4.0 * std::sqrt(want_var / n));
    EXPECT_NEAR(var, want_var, 4.0 * want_var * std::sqrt(2.0 / n));
    // And close to the continuum OU law.
    EXPECT_NEAR(want_mean, 2.0 * std::exp(-1.0), 0.01);
    EXPECT_NEAR(want_var, (1.0 - std::exp(-2.0)) / 2.0, 0.01);
}

TEST(OdeFlow, ExponentialDecay) {
    const auto drift = DriftSpec::linear(-1.0);
    EXPECT_NEAR(ode_flow_h(drift, 0.0, 1.0, 3.0, 4), 3.0 * std::exp(-1.0), 1e-4);
    // Fourth order: halving the step cuts the error by about 16.
    const double e8 = std::abs(ode_flow_h(drift, 0.0, 1.0, 3.0, 8) - 3.0 * std::exp(-1.0));
    const double e16 = std::abs(ode_flow_h(drift, 0.0, 1.0, 3.0, 16) - 3.0 * std::exp(-1.0));
    EXPECT_NEAR(e8 / e16, 16.0, 1.0);
    EXPECT_EQ(ode_flow_h(drift, 2.0, 2.0, 3.0, 4), 3.0);
    EXPECT_THROW(ode_flow_h(drift, 1.0, 0.0, 3.0, 4), InputError);
}

TEST(OuExactStep, MomentsAndEdgeCases) {
    EXPECT_EQ(ou_exact_step(1.0, 2.0, 0.0, 5.0), 2.0);
    EXPECT_DOUBLE_EQ(ou_exact_step(1.0, 2.0, 0.5, 0.0), 2.0 * std::exp(-0.5));
    EXPECT_NEAR(ou_exact_step(1.0, 0.0, 1e-12, 1.0), 1e-6, 1e-12);
    EXPECT_THROW(ou_exact_step(0.0, 1.0, 1.0, 0.0), InputError);
}

TEST(IntegrateSde, SilentNoiseFollowsTheOde) {
    auto silent = NoiseStream::silent();
    const auto flat = integrate_sde(DriftSpec::zero(), 0.0, TimeGrid(0.0, 0.1, 50), silent);
    for (double v : flat.values) EXPECT_EQ(v, 0.0);
    // Euler on the drift alone is first order: error shrinks with dt.
    double prev_err = INFINITY;
    for (double dt : {0.01, 0.001}) {
        auto s = NoiseStream::silent();
        const TimeGrid g(0.0, dt, static_cast<std::size_t>(std::lround(1.0 / dt)));
        const double x = integrate_sde(DriftSpec::linear(-1.0), 2.0, g, s).values.back();
        const double err = std::abs(x - ode_flow_h(DriftSpec::linear(-1.0), 0.0, 1.0, 2.0, 64));
        EXPECT_LT(err, 2.0 * dt);
        EXPECT_LT(err, prev_err);
        prev_err = err;
    }
}

TEST(OdeFlow, ClosedFormAndSelfRefinement) {
    EXPECT_NEAR(ode_flow_h(DriftSpec::linear(-1.0), 0.0, std::log(2.0), 2.0, 128), 1.0, 1e-10);
    EXPECT_EQ(ode_flow_h(DriftSpec::parse("linsin:-1:0.5"), 0.4, 0.4, 1.7, 1), 1.7);
    const auto d = DriftSpec::parse("linsin:-1:0.5");
    EXPECT_NEAR(ode_flow_h(d, 0.0, 1.0, 0.3, 20), ode_flow_h(d, 0.0, 1.0, 0.3, 200), 1e-8);
    // Monotone in u for a monotone drift.
    EXPECT_LT(ode_flow_h(d, 0.0, 2.0, 0.3, 20), ode_flow_h(d, 0.0, 2.0, 0.31, 20));
}

TEST(OuExactStep, StationaryLimitAndEnsembleMoments) {
    EXPECT_NEAR(ou_exact_step(1.0, 0.0, 1e3, 1.3), std::sqrt(0.5) * 1.3, 1e-15);
    // One step of 0.5 versus five steps of 0.1, both against the closed form.
    const int n = 100000;
    double m1 = 0, v1 = 0, m5 = 0, v5 = 0;
    NoiseStream s(31, {0, 0, Purpose::Test});
    for (int r = 0; r < n; ++r) {
        const double a = ou_exact_step(2.0, 3.0, 0.5, s.gaussian());
        double b = 3.0;
        for (int k = 0; k < 5; ++k) b = ou_exact_step(2.0, b, 0.1, s.gaussian());
        m1 += a, v1 += a * a, m5 += b, v5 += b * b;
    }
    m1 /= n, m5 /= n;
    v1 = v1 / n - m1 * m1, v5 = v5 / n - m5 * m5;
    const double mean = 3.0 * std::exp(-1.0), var = (1.0 - std::exp(-2.0)) / 4.0;
    for (auto [m, v] : {std::pair{m1, v1}, std::pair{m5, v5}}) {
        EXPECT_NEAR(m, mean, 4.0 * std::sqrt(var / n));
        EXPECT_NEAR(v, var, 4.0 * var * std::sqrt(2.0 / n));
    }
}

TEST(IntegrateSde, LongRunOuMoments) {
    const auto drift = DriftSpec::linear(-1.0);
    const TimeGrid g(0.0, 0.005, 600);
    const int n = 20000;
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < n; ++r) {
        NoiseStream s(4, {static_cast<std::uint64_t>(r), 0, Purpose::Test});
        const double x = integrate_sde(drift, 5.0, g, s).values.back();
        sum += x, sum2 += x * x;
    }
    const double mean = sum / n, var = sum2 / n - mean * mean;
    const double want_var = (1.0 - std::exp(-6.0)) / 2.0;
    // Euler bias at dt = 0.005 is below a percent; allow it on top of 4 SE.
    EXPECT_NEAR(mean, 5.0 * std::exp(-3.0), 4.0 * std::sqrt(want_var / n) + 0.005);
    EXPECT_NEAR(var, want_var, 4.0 * want_var * std::sqrt(2.0 / n) + 0.005);
}
