#include "coalflow/sde.hpp"

#include <cmath>
#include <string>

#include "coalflow/errors.hpp"

namespace coalflow {

TimeGrid::TimeGrid(double start, double step, std::size_t steps) : t_start(start), dt(step), n_steps(steps) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InputError("time grid needs dt > 0");
}

std::size_t TimeGrid::index_of(double t, double rel_tol) const {
    const double k = std::round((t - t_start) / dt);
    if (k < 0.0 || k > static_cast<double>(n_steps) || std::abs(t - time(static_cast<std::size_t>(k))) > rel_tol * dt) {
        throw RangeError("time " + std::to_string(t) + " is not on the grid [" + std::to_string(t_start) + ", " +
                         std::to_string(t_end()) + "] with dt=" + std::to_string(dt));
    }
    return static_cast<std::size_t>(k);
}

bool Path::well_formed() const noexcept {
    if (values.size() != grid.size()) return false;
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Path reversed(const Path& path) {
    Path out;
    out.grid = path.grid;
    out.grid.t_start = path.grid.t_end();
    out.values.assign(path.values.rbegin(), path.values.rend());
    return out;
}

Path integrate_sde(const DriftSpec& drift, double x0, const TimeGrid& grid, NoiseStream& noise) {
    Path path{grid, {}};
    path.values.resize(grid.size());
    path.values[0] = x0;
    const double sd = std::sqrt(grid.dt);
    double x = x0;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        x = x + drift(x) * grid.dt + sd * noise.gaussian();
        path.values[k + 1] = x;
    }
    return path;
}

double ode_flow_h(const DriftSpec& drift, double s, double t, double u, int substeps) {
    if (t < s) throw InputError("ode_flow_h requires t >= s");
    if (substeps < 1) throw InputError("ode_flow_h requires substeps >= 1");
    if (t == s) return u;
    const double h = (t - s) / substeps;
    double y = u;
    for (int i = 0; i < substeps; ++i) {
        const double k1 = drift(y);
        const double k2 = drift(y + 0.5 * h * k1);
        const double k3 = drift(y + 0.5 * h * k2);
        const double k4 = drift(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return y;
}

double ou_exact_step(double lambda, double z, double dt, double xi) {
    if (!(lambda > 0.0)) throw InputError("ou_exact_step requires lambda > 0");
    if (dt < 0.0) throw InputError("ou_exact_step requires dt >= 0");
    if (dt == 0.0) return z;
    const double decay = std::exp(-lambda * dt);
    // (1 - e^{-2 lambda dt}) / (2 lambda), written with expm1 for small dt.
    const double var = -std::expm1(-2.0 * lambda * dt) / (2.0 * lambda);
    return z * decay + std::sqrt(var) * xi;
}

}  // namespace coalflow
