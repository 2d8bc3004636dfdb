#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coalflow/analysis.hpp"
#include "coalflow/coalescing.hpp"
#include "coalflow/drift.hpp"
#include "coalflow/sde.hpp"

namespace coalflow {

/// Spatial injection lattice: points x_min + i*dx refreshed every `period` steps.
struct InjectionGrid {
    double x_min = -5.0;
    double x_max = 5.0;
    double dx = 0.1;
    std::size_t period = 10;

    std::vector<double> points() const;
};

/// A single start (time, x) injected when the grid reaches `time`.
struct PointInjection {
    double time = 0.0;
    double x = 0.0;
};

struct FlowConfig {
    DriftSpec drift;
    double T = 20.0;  // window starts at -T
    double H = 1.0;   // and ends at H
    double dt = 0.01;
    std::optional<InjectionGrid> injection = InjectionGrid{};
    std::vector<PointInjection> points;
    std::uint64_t seed = 1;
    std::uint64_t replicate = 0;
    bool bridge_correction = true;
    /// Distance outside the injection range where trajectories are frozen;
    /// empty selects default_escape_margin().
    std::optional<double> escape_margin;
    std::size_t live_cap = 1'000'000;
};

/// 10 stationary standard deviations 10/sqrt(2 lambda) for a monotone drift,
/// otherwise 10 sqrt(T + H) (ten diffusive lengths over the window).
double default_escape_margin(const DriftSpec& drift, double T, double H);

/// One realization of the discretized flow on [-T, H]. Immutable after
/// build_flow(); all queries follow the stored trajectory forest, so the
/// cocycle identity holds exactly.
class FlowRealization {
public:
    const FlowConfig& config() const noexcept { return config_; }
    const TimeGrid& grid() const noexcept { return system_.grid(); }
    const ParticleSystem& system() const noexcept { return system_; }
    double escape_margin() const noexcept { return margin_; }

    /// Grid step of time t; RangeError off the grid or outside the window.
    std::size_t step_of(double t) const;

    /// Live particle nearest to x at `step` (ties toward -infinity).
    ParticleId snap_id(std::size_t step, double x) const;
    double snap(std::size_t step, double x) const;

    /// psi_{s,t}(x) with x snapped at time s.
    double evaluate(double s, double t, double x) const;
    double evaluate_steps(std::size_t s, std::size_t t, double x) const;

    std::vector<std::size_t> live_counts() const;
    /// Particles frozen by the escape guard.
    std::size_t escaped_count() const;

private:
    friend FlowRealization build_flow(const FlowConfig& config);

    FlowConfig config_;
    ParticleSystem system_;
    double margin_ = 0.0;
};

/// Builds a realization. At every injection step new particles go to the
/// injection points farther than dx/2 from any live particle, explicit point
/// injections are added at their times, then the system advances.
/// ResourceError if the live count exceeds config.live_cap.
FlowRealization build_flow(const FlowConfig& config);

struct PullbackResult {
    std::vector<double> times;   // probe times t (start time is -t)
    std::vector<double> values;  // psi_{-t,0}(x)
    /// Smallest probe time from which the sequence is constant to the end.
    std::optional<double> constant_from;
};

/// psi_{-t,target}(x) for each probe time t (sorted ascending internally).
PullbackResult pullback(const FlowRealization& flow, double x, std::span<const double> probe_times,
                        double target_time = 0.0);

struct StationaryPointEstimate {
    double value = 0.0;
    double stabilization_time = 0.0;  // t0, measured back from the target time
    bool stabilized = false;
    double window_used = 0.0;
    double target_time = 0.0;
};

/// Default share of the window that must be covered by the agreeing plateau.
inline constexpr double kDefaultMinPlateau = 0.55;

/// Pullback of the whole probe interval [-c, c] to `target_time` from every
/// grid start time. Stabilized when, from the start of the window up to some
/// t0 before the target, all probe points map to one common value and that
/// plateau covers at least `min_plateau` of the window.
StationaryPointEstimate stationary_point(const FlowRealization& flow, double c, double target_time = 0.0,
                                         double min_plateau = kDefaultMinPlateau);

struct StationarityReport {
    enum class Status { Pass, Fail, NotStabilized };
    Status status = Status::NotStabilized;
    double h = 0.0;
    StationaryPointEstimate at_zero;
    StationaryPointEstimate at_h;
    double pushed = 0.0;  // psi_{0,h}(eta_0)
};

/// eta_0 and eta_h from the same realization, and the identity
/// psi_{0,h}(eta_0) == eta_h checked bitwise.
StationarityReport stationarity_check(const FlowRealization& flow, double h, double c,
                                      double min_plateau = kDefaultMinPlateau);

const char* to_string(StationarityReport::Status s);

/// Sample mean and variance with standard errors.
struct MomentSummary {
    std::size_t n = 0;
    double mean = 0.0;
    double mean_se = 0.0;
    double variance = 0.0;
    double variance_se = 0.0;

    static MomentSummary of(std::span<const double> xs);
};

struct PullbackStudyOptions {
    double c = 5.0;
    double h = 1.0;
    double min_plateau = kDefaultMinPlateau;
    std::vector<double> uniqueness_probes{0.0, 3.0};
};

struct PullbackStudy {
    std::size_t realizations = 0;
    std::size_t stabilized = 0;
    std::size_t stationarity_checked = 0;
    std::size_t stationarity_pass = 0;
    std::size_t uniqueness_checked = 0;
    std::size_t uniqueness_pass = 0;
    std::size_t escaped = 0;
    MomentSummary eta;
    std::vector<StationaryPointEstimate> estimates;
};

/// Independent realizations (replicate index r = 0..n-1 on top of
/// base.replicate) of the pullback procedure with stationarity and
/// uniqueness checks.
PullbackStudy pullback_study(const FlowConfig& base, std::size_t realizations, const PullbackStudyOptions& options);

/// P(psi_{-t,0}(x) != psi_{-s,0}(y)), fresh two-start realization per replicate.
TailEstimate disagreement_probability(const DriftSpec& drift, double x, double y, double s, double t,
                                      std::size_t replicates, std::uint64_t seed, double dt = 0.01,
                                      bool bridge_correction = true);

struct DecayStudy {
    std::vector<double> s_values;
    std::vector<TailEstimate> estimates;
    FitReport fit;
};

/// disagreement_probability over s with t = s + t_offset, plus the
/// exponential fit of the decay. Each s uses an independent seed.
DecayStudy disagreement_decay(const DriftSpec& drift, double x, double y, std::span<const double> s_values,
                              double t_offset, std::size_t replicates, std::uint64_t seed, double dt = 0.01);

struct VarianceGrowthRow {
    double t = 0.0;
    MomentSummary moments;
    double ratio = 0.0;  // variance / t
};

/// Ensemble law of psi_{-t,0}(x) for each t, one realization per replicate
/// with x injected at every -t.
std::vector<VarianceGrowthRow> variance_growth(const DriftSpec& drift, double x, std::span<const double> times,
                                               std::size_t replicates, std::uint64_t seed, double dt = 0.01);

/// Exact structural audit of a realization on sampled queries.
struct FlowInvariantReport {
    std::size_t cocycle_violations = 0;
    std::size_t monotonicity_violations = 0;
    std::size_t identity_violations = 0;
    std::size_t queries = 0;
    InvariantReport system;

    std::size_t total() const noexcept {
        return cocycle_violations + monotonicity_violations + identity_violations + system.total();
    }
};

FlowInvariantReport audit_flow(const FlowRealization& flow, std::size_t samples, std::uint64_t seed);

/// Trajectory fan: psi_{s,t}(x) from each (start time, x) every `stride` steps
/// up to `end_time`. CSV columns: start_time,start_x,time,position.
void write_fan_csv(std::ostream& os, const FlowRealization& flow, std::span<const double> start_times,
                   std::span<const double> xs, double end_time, std::size_t stride);

}  // namespace coalflow
