#include <gtest/gtest.h>

#include <cmath>

#include "coalflow/analysis.hpp"
#include "coalflow/dual.hpp"
#include "coalflow/errors.hpp"

using namespace coalflow;

TEST(ArrowField, SitesAndErrors) {
    const auto f = build_arrow_field(0.0, 1.0, 2.0, 0.01, 3);
    EXPECT_DOUBLE_EQ(f.dx(), 0.1);
    EXPECT_THROW(f.arrow(0, 1), LogicError);
    EXPECT_THROW(f.arrow(0, 1000), RangeError);
    EXPECT_THROW(build_arrow_field(0.0, 1.0, 0.01, 0.01, 3), RangeError);
    const int a = f.arrow(0, 0);
    EXPECT_TRUE(a == 1 || a == -1);
    EXPECT_EQ(f.forward_step(0, 0), a);
    // The dual arrow from (1, j) steps away from the forward arrow at (0, j).
    EXPECT_EQ(f.dual_step(1, 0), -a);
}

TEST(ArrowField, ArrowsAreFairAndUncorrelated) {
    const auto f = build_arrow_field(0.0, 10.0, 3.0, 0.01, 4);
    long n = 0, sum = 0, lag = 0;
    for (std::int64_t l = 0; l < 1000; ++l) {
        for (Site j = -28; j <= 28; ++j) {
            if (!ArrowField::is_forward_site(l, j)) continue;
            const int a = f.arrow(l, j);
            sum += a;
            ++n;
            if (j + 2 <= 28) lag += a * f.arrow(l, j + 2);
        }
    }
    EXPECT_LT(std::abs(static_cast<double>(sum)) / std::sqrt(static_cast<double>(n)), 4.0);
    EXPECT_LT(std::abs(static_cast<double>(lag)) / std::sqrt(static_cast<double>(n)), 4.0);
}

TEST(ArrowField, ForwardAndDualWalksNeverCross) {
    const auto f = build_arrow_field(0.0, 4.0, 12.0, 0.01, 5);
    std::size_t crossings = 0;
    for (Site j0 = -10; j0 <= 10; j0 += 2) {
        const auto fw = f.forward_walk(0, j0, 400);
        for (Site d0 = -11; d0 <= 11; d0 += 2) {
            auto dw = f.dual_walk(400, d0, 0);
            std::reverse(dw.begin(), dw.end());
            crossings += count_crossings(0, fw, 0, dw);
        }
    }
    EXPECT_EQ(crossings, 0u);
}

namespace {

std::vector<StartPoint> starts_at(double t, double lo, double hi, int n) {
    std::vector<StartPoint> s;
    for (int i = 0; i < n; ++i) s.push_back({t, lo + (hi - lo) * i / (n - 1)});
    return s;
}

}  // namespace

TEST(FractionalStep, ExactAuditsAreClean) {
    for (const char* d : {"linear:-1", "zero", "linsin:-1:0.3"}) {
        const auto fs = starts_at(0.0, -2.0, 2.0, 10);
        const auto bs = starts_at(1.0, -2.0, 2.0, 10);
        const auto sys = fractional_step_dual(DriftSpec::parse(d), fs, bs, 20, 6, DualOptions{.lattice_steps = 50});
        EXPECT_EQ(audit_crossings(sys).crossings, 0u) << d;
        EXPECT_GT(audit_crossings(sys).pairs_checked, 0u);
        EXPECT_EQ(audit_families(sys).total(), 0u) << d;
    }
}

TEST(FractionalStep, ZeroDriftReducesToArrowWalks) {
    const auto fs = starts_at(0.0, -1.0, 1.0, 3);
    const auto sys = fractional_step_dual(DriftSpec::zero(), fs, {}, 4, 9, DualOptions{.lattice_steps = 25});
    for (const auto& p : sys.forward) {
        const auto walk = sys.field.forward_walk(p.l_first, p.sites.front(), sys.last_l());
        ASSERT_EQ(walk.size(), p.sites.size());
        EXPECT_EQ(walk, p.sites);
    }
}

TEST(FractionalStep, ForwardRegressionRecoversDrift) {
    const auto fs = starts_at(0.0, -3.0, 3.0, 20);
    std::vector<Path> segs;
    for (std::uint64_t r = 0; r < 10; ++r) {
        DualOptions o{.lattice_steps = 100};
        o.replicate = r;
        const auto sys = fractional_step_dual(DriftSpec::linear(-1.0), fs, {}, 100, 10, o);
        const auto s = distinct_segments(sys, Family::Forward, 100);
        segs.insert(segs.end(), s.begin(), s.end());
    }
    const auto reg = drift_regression(segs, 100);
    EXPECT_NEAR(reg.slope, -1.0, 4.0 * reg.standard_error + 0.05);
}

TEST(FractionalStep, MartingaleNegativeControl) {
    // Paths built with drift -x but compensated with +x are rejected.
    const std::vector<StartPoint> fs{{0.0, 3.0}};
    std::vector<Path> segs;
    for (std::uint64_t r = 0; r < 20; ++r) {
        DualOptions o{.lattice_steps = 50};
        o.replicate = r;
        const auto sys = fractional_step_dual(DriftSpec::linear(-1.0), fs, {}, 50, 11, o);
        segs.push_back(sys.path(Family::Forward, 0));
    }
    EXPECT_TRUE(martingale_diagnostic(segs, DriftSpec::linear(-1.0), 50).mean_ok);
    EXPECT_FALSE(martingale_diagnostic(segs, DriftSpec::linear(1.0), 50).pass());
}

TEST(Covariation, SyntheticPaths) {
    const TimeGrid g(0.0, 0.01, 4);
    const Path a{g, {0.0, 0.1, 0.0, 0.1, 0.2}};
    const Path b{g, {0.0, 0.1, 0.2, 0.1, 0.2}};
    const auto r = quadratic_covariation(a, b);
    ASSERT_TRUE(r.meeting_index);
    EXPECT_EQ(*r.meeting_index, 0u);
    const Path c{g, {1.0, 1.1, 1.0, 1.1, 1.2}};
    const auto never = quadratic_covariation(a, c);
    EXPECT_FALSE(never.meeting_index);
    EXPECT_FALSE(never.post);
    EXPECT_NEAR(never.pre.sum, 4 * 0.01, 1e-12);
    EXPECT_THROW(quadratic_covariation(a, Path{TimeGrid(0.0, 0.02, 4), c.values}), InputError);
}

TEST(Nonexistence, DegenerateAndSeparatedIntervals) {
    const auto field = build_arrow_field(-20.0, 0.0, 20.0, 0.01, 12);
    const auto same = nonexistence_demo(field, 0.5, 0.5, 20.0);
    EXPECT_TRUE(same.degenerate);
    for (std::uint64_t seed : {12u, 13u, 14u}) {
        const auto f = build_arrow_field(-20.0, 0.0, 20.0, 0.01, seed);
        const auto rep = nonexistence_demo(f, -1.0, 1.0, 20.0);
        EXPECT_FALSE(rep.degenerate);
        EXPECT_EQ(rep.reachable_from_before, 0u);
        if (!rep.inconclusive) EXPECT_GT(rep.start_times_checked, 0u);
    }
}

// The check runs the reversed drift -a, so a contracting a gives repelling paths.
TEST(NonMeeting, ReversedDriftKeepsPathsApart) {
    const std::vector<double> hz{2.0, 5.0};
    const auto expanding = nonmeeting_check(DriftSpec::linear(-1.0), -1.0, 1.0, hz, 2000, 13);
    EXPECT_TRUE(expanding.positive);
    EXPECT_TRUE(expanding.plateau);
    const auto contracting = nonmeeting_check(DriftSpec::linear(1.0), -1.0, 1.0, hz, 2000, 13);
    EXPECT_TRUE(contracting.decreasing);
}

TEST(ArrowField, WalkIncrementsHaveDiffusiveVariance) {
    const int n = 400, walks = 2000;
    double sum = 0, sum2 = 0;
    for (int r = 0; r < walks; ++r) {
        const auto f = build_arrow_field(0.0, 4.0, 8.0, 0.01, 21, r);
        const double d = (f.forward_walk(0, 0, n).back()) * f.dx();
        sum += d, sum2 += d * d;
    }
    const double var = n * 0.01;
    EXPECT_NEAR(sum / walks, 0.0, 4.0 * std::sqrt(var / walks));
    EXPECT_NEAR(sum2 / walks, var, 4.0 * var * std::sqrt(2.0 / walks));
}

namespace {

// KS distance of lattice meeting times of two forward walks started 1 apart
// against the continuum law 2 Phi(-1 / sqrt(2t)).
double lattice_meeting_ks(double dt, int replicates) {
    const double horizon = 4.0;
    const auto steps = static_cast<std::int64_t>(std::lround(horizon / dt));
    std::vector<double> tau;
    for (int r = 0; r < replicates; ++r) {
        const auto f = build_arrow_field(0.0, horizon, 12.0, dt, 22, r);
        const Site gap = 2 * static_cast<Site>(std::lround(0.5 / f.dx()));  // same parity
        Site a = 0, b = gap;
        double t = INFINITY;
        for (std::int64_t l = 0; l < steps; ++l) {
            a = f.forward_step(l, a);
            b = f.forward_step(l, b);
            if (a == b) {
                t = (l + 1) * dt;
                break;
            }
        }
        tau.push_back(t);
    }
    return ks_test(tau, [](double t) { return brownian_meeting_cdf(1.0, t); }, horizon).statistic;
}

}  // namespace

TEST(ArrowField, MeetingLawConvergesUnderRefinement) {
    const double coarse = lattice_meeting_ks(1.0 / 16, 40000);
    const double fine = lattice_meeting_ks(1.0 / 64, 40000);
    EXPECT_LT(fine, coarse) << "coarse " << coarse << " fine " << fine;
}

TEST(FractionalStep, ZeroDriftWalkIsAMartingale) {
    const std::vector<StartPoint> fs{{0.0, 0.0}};
    const auto sys = fractional_step_dual(DriftSpec::zero(), fs, {}, 100, 23, DualOptions{.lattice_steps = 100});
    const std::vector<Path> segs{sys.path(Family::Forward, 0)};
    const auto m = martingale_diagnostic(segs, DriftSpec::zero(), 1);
    EXPECT_EQ(m.increments, 10000u);
    EXPECT_TRUE(m.pass());
}

TEST(FractionalStep, BackwardFamilyCarriesReversedDrift) {
    const auto bs = starts_at(1.0, -3.0, 3.0, 20);
    std::vector<Path> segs;
    for (std::uint64_t r = 0; r < 10; ++r) {
        DualOptions o{.lattice_steps = 100};
        o.replicate = r;
        const auto sys = fractional_step_dual(DriftSpec::linear(-1.0), {}, bs, 100, 24, o);
        const auto s = distinct_segments(sys, Family::Backward, 100);
        segs.insert(segs.end(), s.begin(), s.end());
    }
    const auto reg = drift_regression(segs, 100);
    EXPECT_NEAR(reg.slope, 1.0, 4.0 * reg.standard_error + 0.05);
}

TEST(Covariation, IdenticalLatticePathHasUnitRate) {
    const std::vector<StartPoint> fs{{0.0, 0.0}};
    const auto sys = fractional_step_dual(DriftSpec::zero(), fs, {}, 10, 25, DualOptions{.lattice_steps = 100});
    const auto p = sys.path(Family::Forward, 0);
    const auto r = quadratic_covariation(p, p);
    ASSERT_TRUE(r.post);
    EXPECT_NEAR(r.post->slope, 1.0, 1e-9);
}

TEST(NonMeeting, DriftlessAndStartedTogether) {
    const std::vector<double> hz{1.0, 20.0};
    const auto bm = nonmeeting_check(DriftSpec::zero(), -1.0, 1.0, hz, 2000, 26);
    EXPECT_TRUE(bm.decreasing);
    const auto met = nonmeeting_check(DriftSpec::linear(-1.0), 0.5, 0.5, hz, 200, 26);
    EXPECT_EQ(met.survival.back().hits, 0u);
}
