#include "coalflow/analysis.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "coalflow/errors.hpp"
#include "coalflow/noise.hpp"

namespace coalflow {

namespace {

constexpr double kQuadTol = 1e-9;
constexpr unsigned kQuadDepth = 20;

template <class F>
double integrate(F f, double a, double b, const char* what) {
    double error = 0.0;
    double l1 = 0.0;
    const double value =
        boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, kQuadDepth, kQuadTol, &error, &l1);
    if (!std::isfinite(value) || error > 1e3 * kQuadTol * std::max(l1, 1e-300)) {
        std::ostringstream os;
        os << what << ": quadrature did not converge on [" << a << ", " << b << "] (value " << value
           << ", error estimate " << error << ", L1 " << l1 << ")";
        throw NumericError(os.str());
    }
    return value;
}

void require_positive(double v, const char* name, const char* fn) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InputError(std::string(fn) + ": " + name + " must be > 0");
}

}  // namespace

// ---------------------------------------------------------------- estimates

Interval wilson_interval(std::size_t hits, std::size_t n, double z) {
    if (n == 0) return {0.0, 1.0};
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(hits) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double centre = (p + z2 / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
    Interval ci{std::max(0.0, centre - half), std::min(1.0, centre + half)};
    // Keep p inside the interval despite rounding at the 0/1 edges.
    ci.low = std::min(ci.low, p);
    ci.high = std::max(ci.high, p);
    return ci;
}

TailEstimate TailEstimate::from_counts(std::size_t hits, std::size_t n, double z) {
    TailEstimate t;
    t.hits = hits;
    t.replicates = n;
    t.probability = n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
    const auto ci = wilson_interval(hits, n, z);
    t.ci_low = ci.low;
    t.ci_high = ci.high;
    return t;
}

double TailEstimate::standard_error() const noexcept {
    if (replicates == 0) return 0.0;
    return std::sqrt(probability * (1.0 - probability) / static_cast<double>(replicates));
}

// ---------------------------------------------------------------- closed forms

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double ou_hitting_log_density(double lambda, double gap, double t) {
    require_positive(lambda, "lambda", "ou_hitting_density");
    require_positive(gap, "gap", "ou_hitting_density");
    require_positive(t, "t", "ou_hitting_density");
    const double lt = lambda * t;
    // log(e^{lt} - e^{-lt}) = lt + log1p(-e^{-2 lt});  e^{-lt} / (e^{lt} - e^{-lt}) = 1 / expm1(2 lt).
    const double log_sinh2 = lt + std::log1p(-std::exp(-2.0 * lt));
    const double inv_expm1 = 1.0 / std::expm1(2.0 * lt);
    return std::log(gap / (2.0 * std::sqrt(std::numbers::pi))) + 1.5 * (std::log(2.0 * lambda) - log_sinh2) -
           lambda * gap * gap * inv_expm1 / 2.0 + lt / 2.0;
}

double ou_hitting_density(double lambda, double gap, double t) {
    return std::exp(ou_hitting_log_density(lambda, gap, t));
}

double ou_hitting_tail(double lambda, double gap, double t) {
    require_positive(lambda, "lambda", "ou_hitting_tail");
    require_positive(gap, "gap", "ou_hitting_tail");
    require_positive(t, "t", "ou_hitting_tail");
    auto f = [&](double u) {
        if (u >= 1.0) return 0.0;
        const double w = 1.0 - u;
        const double s = t + u / w;
        return ou_hitting_density(lambda, gap, s) / (w * w);
    };
    return std::clamp(integrate(f, 0.0, 1.0, "ou_hitting_tail"), 0.0, 1.0);
}

double ou_hitting_cdf(double lambda, double gap, double t) {
    require_positive(lambda, "lambda", "ou_hitting_cdf");
    require_positive(gap, "gap", "ou_hitting_cdf");
    if (t <= 0.0) return 0.0;
    auto f = [&](double s) { return s > 0.0 ? ou_hitting_density(lambda, gap, s) : 0.0; };
    return std::clamp(integrate(f, 0.0, t, "ou_hitting_cdf"), 0.0, 1.0);
}

double ou_hitting_cdf_closed(double lambda, double gap, double t) {
    require_positive(lambda, "lambda", "ou_hitting_cdf_closed");
    require_positive(gap, "gap", "ou_hitting_cdf_closed");
    if (t <= 0.0) return 0.0;
    return std::erfc(gap * std::sqrt(lambda / (2.0 * std::expm1(2.0 * lambda * t))));
}

double brownian_min_tail(double level, double horizon) {
    if (!(level < 0.0)) throw InputError("brownian_min_tail requires level < 0");
    require_positive(horizon, "horizon", "brownian_min_tail");
    return 2.0 * normal_cdf(level / std::sqrt(horizon));
}

double brownian_meeting_cdf(double gap, double t) {
    if (t <= 0.0) return gap == 0.0 ? 1.0 : 0.0;
    return 2.0 * normal_cdf(-std::abs(gap) / std::sqrt(2.0 * t));
}

// ---------------------------------------------------------------- tests and fits

double kolmogorov_survival(double lambda) {
    if (lambda < 0.2) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 ? 1.0 : -1.0) * term;
        if (term < 1e-18) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test(std::span<const double> samples, const std::function<double(double)>& cdf,
                 std::optional<double> censor_at) {
    if (samples.size() < 50) throw InputError("ks_test needs at least 50 samples, got " + std::to_string(samples.size()));
    std::vector<double> xs(samples.begin(), samples.end());
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    std::size_t i = 0;
    for (; i < xs.size(); ++i) {
        if (censor_at && xs[i] > *censor_at) break;
        const double f = cdf(xs[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    if (censor_at && i < xs.size()) d = std::max(d, std::abs(cdf(*censor_at) - static_cast<double>(i) / n));
    KsResult r;
    r.n = xs.size();
    r.statistic = d;
    const double rn = std::sqrt(n);
    r.p_value = kolmogorov_survival((rn + 0.12 + 0.11 / rn) * d);
    return r;
}

FitReport exp_fit(std::span<const std::pair<double, double>> points, double r2_flag_below) {
    FitReport fit;
    for (const auto& [s, p] : points) {
        if (p > 0.0 && std::isfinite(p)) fit.data.emplace_back(s, p);
    }
    if (fit.data.size() < 3) {
        throw FitError("exp_fit needs at least three positive estimates, got " + std::to_string(fit.data.size()));
    }
    const double m = static_cast<double>(fit.data.size());
    double sx = 0.0, sy = 0.0;
    for (const auto& [s, p] : fit.data) {
        sx += s;
        sy += std::log(p);
    }
    const double mx = sx / m, my = sy / m;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [s, p] : fit.data) {
        const double dx = s - mx, dy = std::log(p) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) throw FitError("exp_fit needs at least two distinct abscissae");
    const double slope = sxy / sxx;
    fit.rate = -slope;
    fit.constant = std::exp(my - slope * mx);
    const double ss_res = std::max(0.0, syy - slope * sxy);
    fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    fit.low_r_squared = fit.r_squared < r2_flag_below;
    return fit;
}

// ---------------------------------------------------------------- escape bound

double escape_min_start(const DriftSpec& drift, double c) {
    const double x0 = drift.zero_point().value_or(0.0);
    return std::max(c, 2.0 * (std::exp(drift.lipschitz()) * (c - x0) + x0));
}

EscapeReport escape_probability(const DriftSpec& drift, double c, double n, std::size_t replicates,
                                std::uint64_t seed, EscapeOptions options) {
    const auto x0 = drift.zero_point();
    const double lip = drift.lipschitz();
    if (!x0 || !(lip > 0.0)) {
        throw ParameterError("escape_probability requires a drift with a zero x0 and Lipschitz constant Lambda > 0 (got " +
                             drift.to_string() + ")");
    }
    if (!(c > *x0)) throw ParameterError("escape_probability requires c > x0");
    if (replicates == 0) throw InputError("escape_probability needs replicates > 0");
    const double n_min = escape_min_start(drift, c);
    EscapeReport rep;
    rep.in_valid_range = n > n_min;
    if (options.enforce_valid_range && !rep.in_valid_range) {
        std::ostringstream os;
        os << "escape_probability requires n > max(c, 2(e^Lambda (c - x0) + x0)) = " << n_min << ", got n = " << n;
        throw ParameterError(os.str());
    }
    rep.horizon = std::expm1(2.0 * lip) / (2.0 * lip);
    rep.level = -n / 2.0;
    rep.bound = brownian_min_tail(rep.level, rep.horizon);
    rep.direct_level = std::exp(lip) * (c - *x0) + *x0 - n;
    rep.direct_bound = rep.direct_level < 0.0 ? brownian_min_tail(rep.direct_level, rep.horizon) : 1.0;

    const auto steps = static_cast<std::size_t>(std::ceil(1.0 / options.dt - 1e-9));
    const double dt = 1.0 / static_cast<double>(steps);
    const double sd = std::sqrt(dt);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < replicates; ++r) {
        NoiseStream motion(seed, {r, 0, Purpose::Motion});
        NoiseStream bridge(seed, {r, 0, Purpose::Bridge});
        double x = n;
        bool hit = x <= c;
        for (std::size_t k = 0; k < steps && !hit; ++k) {
            const double next = x + drift(x) * dt + sd * motion.gaussian_at(k);
            if (next <= c) {
                hit = true;
            } else if (options.bridge_correction) {
                // Unit-diffusion bridge between two points above c.
                const double p = std::exp(-2.0 * (x - c) * (next - c) / dt);
                if (p > 0x1.0p-54 && bridge.uniform_at(k) < p) hit = true;
            }
            x = next;
        }
        hits += hit ? 1 : 0;
    }
    rep.estimate = TailEstimate::from_counts(hits, replicates);
    rep.estimate.bound = rep.bound;
    if (hits == 0 && rep.bound * static_cast<double>(replicates) < 1.0) {
        rep.verdict = EscapeReport::Verdict::Unresolvable;
    } else {
        rep.verdict = rep.estimate.ci_low <= rep.bound ? EscapeReport::Verdict::Dominated : EscapeReport::Verdict::Violated;
    }
    return rep;
}

const char* to_string(EscapeReport::Verdict v) {
    switch (v) {
        case EscapeReport::Verdict::Dominated:
            return "dominated";
        case EscapeReport::Verdict::Violated:
            return "violated";
        case EscapeReport::Verdict::Unresolvable:
            return "consistent with bound, unresolvable by MC";
    }
    return "?";
}

}  // namespace coalflow
