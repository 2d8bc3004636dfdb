#pragma once

#include <cstddef>
#include <vector>

#include "coalflow/drift.hpp"
#include "coalflow/noise.hpp"

namespace coalflow {

/// Uniform time grid t_start + k*dt, k = 0..n_steps.
struct TimeGrid {
    double t_start = 0.0;
    double dt = 1.0;
    std::size_t n_steps = 0;

    TimeGrid() = default;
    TimeGrid(double start, double step, std::size_t steps);

    double time(std::size_t k) const noexcept { return t_start + static_cast<double>(k) * dt; }
    double t_end() const noexcept { return time(n_steps); }
    double length() const noexcept { return static_cast<double>(n_steps) * dt; }
    std::size_t size() const noexcept { return n_steps + 1; }

    /// Index of the grid point at time t; throws RangeError if t is off the
    /// grid by more than `rel_tol * dt` or outside it.
    std::size_t index_of(double t, double rel_tol = 1e-6) const;

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

/// A sampled trajectory on a TimeGrid.
struct Path {
    TimeGrid grid;
    std::vector<double> values;

    double at(std::size_t k) const { return values.at(k); }
    /// True when the length matches the grid and every value is finite.
    bool well_formed() const noexcept;
};

/// The same values traversed in reversed time: the grid starts at the old end
/// and value k is the old value n_steps - k.
Path reversed(const Path& path);

/// Euler-Maruyama: X_{k+1} = X_k + a(X_k) dt + sqrt(dt) * xi_k, xi_k read
/// from `noise` at positions 0..n_steps-1 relative to its current position.
Path integrate_sde(const DriftSpec& drift, double x0, const TimeGrid& grid, NoiseStream& noise);

/// Deterministic flow of dh/dt = a(h), h(s) = u, evaluated at t >= s with
/// classical RK4 and `substeps` equal steps.
double ode_flow_h(const DriftSpec& drift, double s, double t, double u, int substeps);

/// Exact Ornstein-Uhlenbeck transition for dZ = -lambda Z dt + dB.
double ou_exact_step(double lambda, double z, double dt, double xi);

}  // namespace coalflow
