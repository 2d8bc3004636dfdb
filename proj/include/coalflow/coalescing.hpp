#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "coalflow/drift.hpp"
#include "coalflow/noise.hpp"
#include "coalflow/sde.hpp"

namespace coalflow {

using ParticleId = std::uint32_t;

struct CoalescenceEvent {
    double time = 0.0;
    std::size_t step = 0;
    ParticleId absorbed = 0;
    ParticleId survivor = 0;
};

struct Particle {
    ParticleId id = 0;
    double start_position = 0.0;
    std::size_t birth_step = 0;
    /// Own values for steps birth_step .. birth_step + values.size() - 1. A
    /// merged particle stores up to and including its merge step; later values
    /// are its absorber's.
    std::vector<double> values;
    std::optional<ParticleId> merged_into;
    std::optional<std::size_t> merge_step;
    /// Set when the particle left the escape window and was frozen.
    std::optional<std::size_t> escape_step;
};

/// One live particle at one grid step, in spatial order.
struct LiveEntry {
    double position;
    ParticleId id;
};

/// Live and merged trajectories of an n-point motion plus its coalescence log.
class ParticleSystem {
public:
    ParticleSystem() = default;

    const TimeGrid& grid() const noexcept { return grid_; }
    const std::vector<Particle>& particles() const noexcept { return particles_; }
    const std::vector<CoalescenceEvent>& events() const noexcept { return events_; }
    const Particle& particle(ParticleId id) const { return particles_.at(id); }

    /// Last grid step that was simulated (may stop short of grid().n_steps).
    std::size_t last_step() const noexcept { return last_step_; }

    /// Live representative of `id` at `step` (follows the merge chain).
    ParticleId resolve(ParticleId id, std::size_t step) const;
    /// Position of particle `id` at `step`; RangeError before its birth or
    /// after the simulated horizon.
    double value_at(ParticleId id, std::size_t step) const;
    bool is_live(ParticleId id, std::size_t step) const;
    std::optional<double> merge_time(ParticleId id) const;

    /// Full trajectory of `id` from its birth to last_step(), merged part included.
    Path trajectory(ParticleId id) const;

    std::size_t live_count(std::size_t step) const;

    bool has_snapshots() const noexcept { return !snapshot_offsets_.empty(); }
    /// Live particles at `step` sorted by position (requires snapshots).
    std::span<const LiveEntry> live_at(std::size_t step) const;

    /// CSV: time,particle_id,position,live_flag
    void write_trajectories_csv(std::ostream& os) const;
    /// CSV: time,absorbed,survivor
    void write_events_csv(std::ostream& os) const;

private:
    friend class CoalescingEngine;

    TimeGrid grid_;
    std::vector<Particle> particles_;
    std::vector<CoalescenceEvent> events_;
    std::size_t last_step_ = 0;
    std::vector<std::size_t> snapshot_offsets_;
    std::vector<LiveEntry> snapshot_entries_;
};

struct EngineOptions {
    /// Brownian-bridge crossing correction in meeting detection. Turning it
    /// off is the documented fault-injection hook.
    bool bridge_correction = true;
    /// Record the sorted live list at every step (needed for flow queries).
    bool record_snapshots = false;
    /// Particles leaving [escape_lo, escape_hi] are frozen and flagged.
    std::optional<double> escape_lo;
    std::optional<double> escape_hi;
    std::size_t live_cap = 1'000'000;
};

/// Steps a coalescing system forward on a grid. Particles move by
/// Euler-Maruyama with their own Motion stream (keyed by particle id, read at
/// the absolute step index), adjacent pairs are tested for meeting after every
/// step, and met pairs merge into the lower id at the midpoint of their
/// endpoints (a run of several met particles at the mean of all of them).
class CoalescingEngine {
public:
    CoalescingEngine(DriftSpec drift, TimeGrid grid, std::uint64_t seed, std::uint64_t replicate,
                     EngineOptions options = {});

    /// Inserts a particle at the current step. A start equal to a live
    /// position merges immediately into the existing particle.
    ParticleId inject(double x);

    /// Distance from x to the nearest live particle (infinity when none).
    double nearest_live_distance(double x) const;

    void step();

    /// Merges live, spatially adjacent particles i and j at the current step:
    /// the lower id survives and both sit at the midpoint of their positions.
    /// Throws LogicError otherwise.
    void merge(ParticleId i, ParticleId j);
    std::size_t current_step() const noexcept { return step_; }
    bool finished() const noexcept { return step_ >= system_.grid_.n_steps; }
    std::size_t live_count() const noexcept { return live_.size(); }

    /// Ends the run at the current step and hands over the system.
    ParticleSystem finish() &&;

private:
    struct Live {
        ParticleId id;
        double x;
        bool frozen;
        NoiseStream noise;
    };

    void record_snapshot();
    void record_value(ParticleId id, double x);
    /// Collapses live_[first..last] into one particle at `position`.
    void merge_range(std::size_t first, std::size_t last, double position);

    DriftSpec drift_;
    std::uint64_t seed_;
    std::uint64_t replicate_;
    EngineOptions options_;
    ParticleSystem system_;
    std::vector<Live> live_;  // sorted by x, strictly increasing
    std::size_t step_ = 0;
    struct Cluster {
        std::size_t first, last;
        double sum;
        double pos;
    };
    std::vector<double> scratch_;
    std::vector<Cluster> clusters_;
    std::vector<Live> spare_;
};

/// Meeting decision for two independent diffusions over one step: true on a
/// sign change (or touch) of d = x_i - x_j, otherwise with the Brownian-bridge
/// crossing probability exp(-d_prev * d_next / dt) of a difference with
/// diffusion coefficient 2, compared against `uniform_draw`.
bool detect_meeting(double xi_prev, double xi_next, double xj_prev, double xj_next, double dt,
                    double uniform_draw, bool bridge_correction = true);

/// Bridge crossing probability used by detect_meeting when the sign is kept.
double bridge_crossing_probability(double d_prev, double d_next, double dt);

/// n-point motion from sorted starts at grid.t_start.
ParticleSystem simulate_n_point(const DriftSpec& drift, std::span<const double> starts, const TimeGrid& grid,
                                std::uint64_t seed, std::uint64_t replicate = 0, EngineOptions options = {});

/// Meeting time of the two-point motion started from (x, y); empty if they
/// have not met by the end of the grid.
std::optional<double> meeting_time(const DriftSpec& drift, double x, double y, const TimeGrid& grid,
                                   std::uint64_t seed, std::uint64_t replicate, bool bridge_correction = true);
/// Same result through a full CoalescingEngine run (reference route).
std::optional<double> meeting_time_engine(const DriftSpec& drift, double x, double y, const TimeGrid& grid,
                                          std::uint64_t seed, std::uint64_t replicate, bool bridge_correction = true);

struct MomentEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
    std::size_t replicates = 0;
};

/// Monte Carlo E X_x(t)^2 for the one-point motion (Euler steps of size dt).
MomentEstimate second_moment_diag(const DriftSpec& drift, double x, double t, std::size_t replicates,
                                  double dt, std::uint64_t seed);

struct SecondMomentScan {
    struct Point {
        double x;
        double t;
        MomentEstimate estimate;
        double ratio;  // estimate / (1 + x^2)
    };
    std::vector<Point> points;
    double fitted_constant = 0.0;  // smallest C with estimate <= C (1 + x^2) on the grid
};

/// second_moment_diag over a grid of (x, t); requires a strictly monotone drift.
SecondMomentScan second_moment_scan(const DriftSpec& drift, std::span<const double> xs,
                                    std::span<const double> ts, std::size_t replicates, double dt,
                                    std::uint64_t seed);

struct InvariantReport {
    std::size_t order_violations = 0;
    std::size_t absorbing_violations = 0;
    std::size_t chain_violations = 0;
    std::size_t non_finite = 0;
    std::size_t checked_steps = 0;

    std::size_t total() const noexcept {
        return order_violations + absorbing_violations + chain_violations + non_finite;
    }
};

/// Exact structural audit: order preservation of live particles, absorbing
/// coalescence (merged values equal the absorber's bitwise), acyclic merge
/// chains that end at a particle live at the merge step.
InvariantReport check_invariants(const ParticleSystem& system);

}  // namespace coalflow
