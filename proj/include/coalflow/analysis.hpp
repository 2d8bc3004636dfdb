#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "coalflow/drift.hpp"

namespace coalflow {

// ---------------------------------------------------------------- estimates

struct Interval {
    double low = 0.0;
    double high = 1.0;
};

/// 95% two-sided normal quantile.
inline constexpr double kZ95 = 1.959963984540054;

/// Wilson score interval for a binomial proportion; always inside [0, 1].
Interval wilson_interval(std::size_t hits, std::size_t n, double z = kZ95);

/// Monte Carlo probability with its Wilson interval and, optionally, the
/// analytic bound or value it is compared against.
struct TailEstimate {
    double probability = 0.0;
    std::size_t replicates = 0;
    std::size_t hits = 0;
    double ci_low = 0.0;
    double ci_high = 1.0;
    std::optional<double> bound;

    static TailEstimate from_counts(std::size_t hits, std::size_t n, double z = kZ95);
    double standard_error() const noexcept;
};

// ---------------------------------------------------------------- closed forms

double normal_cdf(double x);

/// Density of the meeting time of two coalescing motions with drift -lambda x
/// started |x - y| = gap apart (zero-hitting time of the OU comparison process
/// started at gap / sqrt(2)). Evaluated in log-space. DomainError-style
/// InputError for non-positive arguments.
double ou_hitting_density(double lambda, double gap, double t);
double ou_hitting_log_density(double lambda, double gap, double t);

/// P(tau > t) by adaptive Gauss-Kronrod quadrature of the density over
/// [t, inf) with s = t + u / (1 - u). Throws NumericError on non-convergence.
double ou_hitting_tail(double lambda, double gap, double t);
/// P(tau <= t) by quadrature of the density over [0, t].
double ou_hitting_cdf(double lambda, double gap, double t);
/// The same CDF in closed form, erfc(gap sqrt(lambda / (2 (e^{2 lambda t} - 1)))):
/// the OU difference is a time-changed Brownian motion with clock
/// (e^{2 lambda t} - 1) / (2 lambda).
double ou_hitting_cdf_closed(double lambda, double gap, double t);

/// P(min_{0<=s<=horizon} w(s) <= level) = 2 Phi(level / sqrt(horizon)), level < 0.
double brownian_min_tail(double level, double horizon);

/// P(tau <= t) for two independent driftless Brownian motions gap apart
/// (difference has diffusion coefficient 2): 2 Phi(-gap / sqrt(2 t)).
double brownian_meeting_cdf(double gap, double t);

// ---------------------------------------------------------------- tests and fits

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
};

/// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{k-1} e^{-2 k^2 lambda^2}.
double kolmogorov_survival(double lambda);

/// One-sample Kolmogorov-Smirnov test against `cdf`. Samples above
/// `censor_at` are treated as right-censored: the supremum runs over
/// t <= censor_at only. Needs at least 50 samples.
KsResult ks_test(std::span<const double> samples, const std::function<double(double)>& cdf,
                 std::optional<double> censor_at = std::nullopt);

/// Exponential model C e^{-rate s} fitted by least squares on log p.
struct FitReport {
    double rate = 0.0;
    double constant = 0.0;
    double r_squared = 0.0;
    std::vector<std::pair<double, double>> data;  // points actually used
    bool low_r_squared = false;
};

FitReport exp_fit(std::span<const std::pair<double, double>> points, double r2_flag_below = 0.95);

// ---------------------------------------------------------------- escape bound

/// Smallest admissible start: max(c, 2 (e^Lambda (c - x0) + x0)).
double escape_min_start(const DriftSpec& drift, double c);

struct EscapeOptions {
    double dt = 0.01;
    bool bridge_correction = true;
    /// Reject starts outside the range where the halved level -n/2 is valid.
    bool enforce_valid_range = true;
};

struct EscapeReport {
    enum class Verdict { Dominated, Violated, Unresolvable };

    TailEstimate estimate;     // P(exists t in [0,1]: X_n(t) <= c), bound set to `bound`
    double bound = 0.0;        // brownian_min_tail(-n/2, horizon)
    double horizon = 0.0;      // (e^{2 Lambda} - 1) / (2 Lambda)
    double level = 0.0;        // -n/2
    double direct_level = 0.0; // e^Lambda (c - x0) + x0 - n, before halving
    double direct_bound = 1.0; // brownian_min_tail(direct_level, horizon), 1 if direct_level >= 0
    bool in_valid_range = true;
    Verdict verdict = Verdict::Dominated;
};

/// Monte Carlo probability that the one-point motion from n drops to c within
/// unit time, checked against the Ornstein-Uhlenbeck comparison bound.
EscapeReport escape_probability(const DriftSpec& drift, double c, double n, std::size_t replicates,
                                std::uint64_t seed, EscapeOptions options = {});

const char* to_string(EscapeReport::Verdict v);

}  // namespace coalflow
