#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace coalflow {

/// Drift coefficient a(x) of dX = a(X) dt + dw.
///
/// Text forms (used by configs and the CLI):
///   "zero"
///   "linear:<slope>"              a(x) = slope * x
///   "linsin:<slope>:<eps>"        a(x) = slope * x + eps * sin(x)
///   "table:<x>:<y>,<x>:<y>,..."   piecewise-linear through the knots
class DriftSpec {
public:
    enum class Kind { Zero, Linear, LinSin, Tabulated };

    struct Knot {
        double x;
        double y;
    };

    DriftSpec() = default;

    static DriftSpec zero();
    static DriftSpec linear(double slope);
    static DriftSpec linsin(double slope, double eps);
    static DriftSpec tabulated(std::vector<Knot> knots);
    static DriftSpec parse(std::string_view text);

    /// a(x). Throws ExtrapolationError for tabulated drift outside its table.
    double operator()(double x) const;

    /// The drift -a, with constants carried over (Λ unchanged, λ dropped
    /// because -a is expanding whenever a is contracting).
    DriftSpec negated() const;

    Kind kind() const noexcept { return kind_; }
    double slope() const noexcept { return slope_; }
    double eps() const noexcept { return eps_; }
    const std::vector<Knot>& knots() const noexcept { return knots_; }

    /// Lipschitz constant Λ.
    double lipschitz() const noexcept { return lipschitz_; }
    /// Monotonicity modulus λ in (a(x)-a(y))(x-y) <= -λ (x-y)^2, if any.
    std::optional<double> monotone() const noexcept { return monotone_; }
    /// A point with a(x0) = 0, if the drift has a unique one.
    std::optional<double> zero_point() const noexcept { return zero_; }

    std::string to_string() const;

    friend bool operator==(const DriftSpec& a, const DriftSpec& b) { return a.to_string() == b.to_string(); }

private:
    void derive_constants();

    Kind kind_ = Kind::Zero;
    double slope_ = 0.0;
    double eps_ = 0.0;
    std::vector<Knot> knots_;

    double lipschitz_ = 0.0;
    std::optional<double> monotone_;
    std::optional<double> zero_;
};

/// Checks the advertised constants on a test grid. Returns the number of
/// sampled pairs that violate the Lipschitz or monotonicity inequality, plus
/// one if the advertised zero is not a zero within `tol`.
std::size_t audit_drift(const DriftSpec& drift, double lo = -50.0, double hi = 50.0,
                        std::size_t points = 1000, double tol = 1e-12);

}  // namespace coalflow
