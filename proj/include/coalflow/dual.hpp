#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "coalflow/analysis.hpp"
#include "coalflow/coalescing.hpp"
#include "coalflow/drift.hpp"
#include "coalflow/sde.hpp"

namespace coalflow {

using Site = std::int64_t;

/// Coalescing random walks on the lattice (l*dt, j*dx), dx = sqrt(dt).
///
/// Sites with l + j even carry forward arrows to (l+1, j +- 1), fair and
/// independent (hashed from the seed, so the field is never stored). Sites
/// with l + j odd are dual sites; the dual arrow from (l+1, j) goes to
/// (l, j - e) where e is the forward arrow at (l, j), the only choice that
/// does not cross it. Forward and dual walks therefore never cross.
class ArrowField {
public:
    ArrowField() = default;
    ArrowField(std::uint64_t seed, std::uint64_t replicate, double dt, std::int64_t l_lo, std::int64_t l_hi, Site j_max);

    double dt() const noexcept { return dt_; }
    double dx() const noexcept { return dx_; }
    std::int64_t l_lo() const noexcept { return l_lo_; }
    std::int64_t l_hi() const noexcept { return l_hi_; }
    Site j_max() const noexcept { return j_max_; }

    static bool is_forward_site(std::int64_t l, Site j) noexcept { return ((l + j) & 1) == 0; }

    /// +1 or -1 at forward site (l, j); LogicError on a dual site, RangeError
    /// outside the field.
    int arrow(std::int64_t l, Site j) const;
    /// (l, j) -> (l+1, .) along the forward arrow.
    Site forward_step(std::int64_t l, Site j) const;
    /// Dual site (l, j) -> (l-1, .) along the dual arrow.
    Site dual_step(std::int64_t l, Site j) const;

    /// Forward walk from (l0, j0) to l1 >= l0; element i is at time l0 + i.
    std::vector<Site> forward_walk(std::int64_t l0, Site j0, std::int64_t l1) const;
    /// Dual walk from (l0, j0) back to l1 <= l0; element i is at time l0 - i.
    std::vector<Site> dual_walk(std::int64_t l0, Site j0, std::int64_t l1) const;

    /// Nearest forward (dual) site to position x at time index l.
    Site snap_forward(std::int64_t l, double x) const noexcept;
    Site snap_dual(std::int64_t l, double x) const noexcept;

private:
    void check(std::int64_t l, Site j) const;

    std::uint64_t seed_ = 0;
    std::uint64_t replicate_ = 0;
    double dt_ = 1.0;
    double dx_ = 1.0;
    std::int64_t l_lo_ = 0;
    std::int64_t l_hi_ = 0;
    Site j_max_ = 0;
};

/// Field covering times [t_lo, t_hi] (lattice index l = round(t/dt)) and
/// positions |x| <= extent. RangeError if the extent is smaller than one site.
ArrowField build_arrow_field(double t_lo, double t_hi, double extent, double dt, std::uint64_t seed,
                             std::uint64_t replicate = 0);

/// Sign changes (or touches) of f - g over the common lattice times of a
/// forward walk starting at l_f and a dual walk listed forward in time from l_g.
std::size_t count_crossings(std::int64_t l_f, std::span<const Site> f, std::int64_t l_g, std::span<const Site> g);

// ---------------------------------------------------------------- fractional steps

enum class Family { Forward, Backward };

const char* to_string(Family f);

struct StartPoint {
    double time = 0.0;
    double x = 0.0;
};

/// One trajectory of a DualSystem in lattice units, listed forward in time:
/// sites[i] is the position at lattice time l_first + i. Forward paths start
/// at l_first; backward paths start at l_first + sites.size() - 1 and run
/// down to l_first.
struct LatticePath {
    std::size_t id = 0;
    StartPoint start;
    std::int64_t l_first = 0;
    std::vector<Site> sites;
    std::optional<std::size_t> merged_into;
    /// Lattice time of the first recorded value shared with the survivor.
    std::optional<std::int64_t> merge_l;
};

struct DualOptions {
    /// Lattice steps per macro step (K); dt = macro_dt / K.
    std::size_t lattice_steps = 200;
    double horizon = 1.0;
    /// Half-width of the lattice; empty picks a width from the starts and drift.
    std::optional<double> extent;
    int rk4_substeps = 4;
    std::uint64_t replicate = 0;
};

/// Forward (f) and backward (g) families of the fractional-step construction.
///
/// Time [0, horizon] is cut into n macro steps of length D = horizon / n, each
/// carrying one drift substep (flow h over time D) followed by K lattice noise
/// steps of total variance D. The drift substep sends a forward site x to
/// D_m(x) = 2 floor((h(x)/dx - p)/2 + U_m) + p, the unbiased, monotone
/// rounding to the parity-p sublattice with one dither U_m per macro step.
/// Backward paths undo the same substeps: K dual steps, then the generalized
/// inverse of D_m, which places the dual path between the forward sites that
/// D_m sends below and above it. Forward values are recorded before the drift
/// substep at each boundary, backward values after its inverse.
struct DualSystem {
    DriftSpec drift;
    std::size_t macro_steps = 0;
    std::size_t lattice_steps = 0;
    double horizon = 0.0;
    double macro_dt = 0.0;
    ArrowField field;
    std::vector<double> dither;  // U_m
    std::vector<LatticePath> forward;
    std::vector<LatticePath> backward;
    std::vector<CoalescenceEvent> forward_events;
    std::vector<CoalescenceEvent> backward_events;

    std::int64_t last_l() const noexcept {
        return static_cast<std::int64_t>(macro_steps * lattice_steps);
    }
    const std::vector<LatticePath>& family(Family f) const { return f == Family::Forward ? forward : backward; }
    /// Path in space units on a forward-time grid.
    Path path(Family f, std::size_t i) const;
};

/// Builds both families from one arrow field. Start times snap to lattice
/// times, positions to the nearest forward (f) or dual (g) site.
DualSystem fractional_step_dual(const DriftSpec& drift, std::span<const StartPoint> forward_starts,
                                std::span<const StartPoint> backward_starts, std::size_t macro_steps,
                                std::uint64_t seed, const DualOptions& options = {});

struct CrossingDetail {
    std::size_t forward_id = 0;
    std::size_t backward_id = 0;
    std::int64_t l = 0;  // lattice time at the end of the offending step
};

struct CrossingAudit {
    std::size_t crossings = 0;
    std::size_t pairs_checked = 0;
    std::size_t steps_checked = 0;
    std::vector<CrossingDetail> details;  // first few offending pairs
};

CrossingAudit audit_crossings(const DualSystem& system);

/// Exact within-family audit: coalescence absorbing, order preserved,
/// initial conditions honoured.
struct FamilyAudit {
    std::size_t order_violations = 0;
    std::size_t absorbing_violations = 0;
    std::size_t start_violations = 0;
    std::size_t total() const noexcept { return order_violations + absorbing_violations + start_violations; }
};

FamilyAudit audit_families(const DualSystem& system);

/// Each path of a family up to its merge time, in the family's own time
/// direction (backward paths are reversed), so coalesced stretches are
/// counted once. The cut is moved to the first multiple of `align` steps at
/// or after the merge: cutting at the last multiple before it would peek at
/// the future and bias increment statistics taken every `align` steps.
std::vector<Path> distinct_segments(const DualSystem& system, Family family, std::size_t align = 1);

/// Least-squares slope b in E[dX | X] = b X D over increments taken every
/// `stride` grid points (stride = K gives macro increments).
struct RegressionReport {
    double slope = 0.0;
    double standard_error = 0.0;
    std::size_t increments = 0;
    double information = 0.0;  // D * sum X^2
};

RegressionReport drift_regression(std::span<const Path> segments, std::size_t stride);

/// Increment-product rate on one stretch: sum of products / elapsed time.
struct CovariationSlope {
    double slope = 0.0;
    double standard_error = 0.0;
    std::size_t steps = 0;
    double sum = 0.0;
    double sum_sq = 0.0;
    double dt = 0.0;

    /// Pools stretches with the same dt.
    void add(const CovariationSlope& other);
    void finalize();
};

struct CovariationReport {
    std::optional<std::size_t> meeting_index;  // first index where the paths agree bitwise
    std::optional<double> meeting_time;
    CovariationSlope pre;
    std::optional<CovariationSlope> post;  // absent when the paths never meet
    std::vector<double> cumulative;       // running sum of increment products
};

/// Quadratic covariation of two paths on a common grid. InputError otherwise.
CovariationReport quadratic_covariation(const Path& a, const Path& b);

struct MartingaleReport {
    std::size_t increments = 0;
    double mean = 0.0;
    double z = 0.0;
    bool mean_ok = true;
    double variance = 0.0;
    double expected_variance = 0.0;
    double chi2 = 0.0;
    double chi2_low = 0.0;
    double chi2_high = 0.0;
    bool variance_ok = true;
    double lag1 = 0.0;
    double lag1_z = 0.0;
    bool lag1_ok = true;

    bool pass() const noexcept { return mean_ok && variance_ok && lag1_ok; }
};

/// Compensated increments m = dX - a(X) D over `stride` grid points, tested
/// at `level`: mean 0 (z-test), variance D (chi-square interval) and lag-1
/// autocorrelation 0 (within a path).
MartingaleReport martingale_diagnostic(std::span<const Path> segments, const DriftSpec& drift, std::size_t stride,
                                       double level = 0.01);

// ---------------------------------------------------------------- non-existence

struct NonexistenceReport {
    bool degenerate = false;    // a == b after snapping: empty trapping interval
    bool inconclusive = false;  // dual walks did not meet within the horizon
    double a = 0.0;
    double b = 0.0;
    double meeting_time = 0.0;  // p: the dual walks from (0,a), (0,b) agree at -p
    /// Forward sites next to the merged dual walk at start times before -p
    /// whose forward walk reaches (a, b) at time 0; must be 0.
    std::size_t reachable_from_before = 0;
    std::size_t start_times_checked = 0;
    /// Forward walk started between the dual walks right after they meet:
    /// its end point and the share of its life spent one site from a dual walk.
    double threaded_end = 0.0;
    double adjacency_fraction = 0.0;
};

/// Dual walks from (0, a) and (0, b) run back until they meet at -p; then
/// every forward start before -p is checked (through the two forward sites
/// flanking the merged dual walk, which bound all others by monotonicity)
/// to miss (a, b) at time 0. The field must cover [-horizon, 0].
NonexistenceReport nonexistence_demo(const ArrowField& field, double a, double b, double horizon);

// ---------------------------------------------------------------- non-meeting

struct NonMeetingReport {
    std::vector<double> horizons;
    std::vector<TailEstimate> survival;  // P(no meeting before horizon)
    bool positive = false;               // lower CI at the largest horizon > 0
    bool plateau = false;                // last estimate >= first - 3 SE(first)
    bool decreasing = false;             // last estimate < first - 3 SE(first)
};

/// Two independent diffusions with drift -a from u1, u2; survival is read
/// off the same replicates at every horizon, so estimates are nested.
NonMeetingReport nonmeeting_check(const DriftSpec& drift, double u1, double u2, std::span<const double> horizons,
                                  std::size_t replicates, std::uint64_t seed, double dt = 0.01);

// ---------------------------------------------------------------- export

/// CSV: time,family,path_id,position
void write_dual_csv(std::ostream& os, const DualSystem& system, std::size_t stride = 1);

}  // namespace coalflow
