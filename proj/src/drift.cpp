#include "coalflow/drift.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "coalflow/errors.hpp"

namespace coalflow {

namespace {

double parse_number(std::string_view s, std::string_view whole) {
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    if (!s.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || !std::isfinite(v)) {
        throw InputError("invalid number '" + std::string(s) + "' in drift expression '" +
                         std::string(whole) + "'");
    }
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    // Prefer the shortest representation that round-trips.
    for (int prec = 1; prec < 17; ++prec) {
        char shorter[32];
        std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
        if (std::strtod(shorter, nullptr) == v) return shorter;
    }
    return buf;
}

}  // namespace

DriftSpec DriftSpec::zero() {
    DriftSpec d;
    d.derive_constants();
    return d;
}

DriftSpec DriftSpec::linear(double slope) {
    DriftSpec d;
    d.kind_ = Kind::Linear;
    d.slope_ = slope;
    d.derive_constants();
    return d;
}

DriftSpec DriftSpec::linsin(double slope, double eps) {
    DriftSpec d;
    d.kind_ = Kind::LinSin;
    d.slope_ = slope;
    d.eps_ = eps;
    d.derive_constants();
    return d;
}

DriftSpec DriftSpec::tabulated(std::vector<Knot> knots) {
    if (knots.size() < 2) throw InputError("tabulated drift needs at least two knots");
    for (std::size_t i = 1; i < knots.size(); ++i) {
        if (!(knots[i].x > knots[i - 1].x)) throw InputError("tabulated drift knots must be strictly increasing in x");
    }
    DriftSpec d;
    d.kind_ = Kind::Tabulated;
    d.knots_ = std::move(knots);
    d.derive_constants();
    return d;
}

DriftSpec DriftSpec::parse(std::string_view text) {
    const auto parts = split(text, ':');
    const auto head = parts.front();
    if (head == "zero" && parts.size() == 1) return zero();
    if (head == "linear" && parts.size() == 2) return linear(parse_number(parts[1], text));
    if (head == "linsin" && parts.size() == 3) {
        return linsin(parse_number(parts[1], text), parse_number(parts[2], text));
    }
    if (head == "table" && parts.size() >= 2) {
        const auto body = text.substr(head.size() + 1);
        std::vector<Knot> knots;
        for (auto item : split(body, ',')) {
            const auto xy = split(item, ':');
            if (xy.size() != 2) throw InputError("malformed table knot '" + std::string(item) + "'");
            knots.push_back({parse_number(xy[0], text), parse_number(xy[1], text)});
        }
        return tabulated(std::move(knots));
    }
    throw InputError("unrecognised drift expression '" + std::string(text) +
                     "' (expected zero | linear:<slope> | linsin:<slope>:<eps> | table:<x>:<y>,...)");
}

double DriftSpec::operator()(double x) const {
    switch (kind_) {
        case Kind::Zero:
            return 0.0;
        case Kind::Linear:
            return slope_ * x;
        case Kind::LinSin:
            return slope_ * x + eps_ * std::sin(x);
        case Kind::Tabulated: {
            if (x < knots_.front().x || x > knots_.back().x) {
                throw ExtrapolationError("tabulated drift queried at x=" + fmt(x) + " outside [" +
                                         fmt(knots_.front().x) + ", " + fmt(knots_.back().x) + "]");
            }
            auto it = std::upper_bound(knots_.begin(), knots_.end(), x,
                                       [](double v, const Knot& k) { return v < k.x; });
            if (it == knots_.end()) return knots_.back().y;
            const auto& r = *it;
            const auto& l = *(it - 1);
            const double w = (x - l.x) / (r.x - l.x);
            return l.y + w * (r.y - l.y);
        }
    }
    return 0.0;
}

DriftSpec DriftSpec::negated() const {
    switch (kind_) {
        case Kind::Zero:
            return zero();
        case Kind::Linear:
            return linear(-slope_);
        case Kind::LinSin:
            return linsin(-slope_, -eps_);
        case Kind::Tabulated: {
            auto k = knots_;
            for (auto& knot : k) knot.y = -knot.y;
            return tabulated(std::move(k));
        }
    }
    return zero();
}

void DriftSpec::derive_constants() {
    monotone_.reset();
    zero_.reset();
    switch (kind_) {
        case Kind::Zero:
            lipschitz_ = 0.0;
            break;
        case Kind::Linear:
            lipschitz_ = std::abs(slope_);
            if (slope_ < 0.0) monotone_ = -slope_;
            if (slope_ != 0.0) zero_ = 0.0;
            break;
        case Kind::LinSin: {
            lipschitz_ = std::abs(slope_) + std::abs(eps_);
            const double lam = -slope_ - std::abs(eps_);
            if (lam > 0.0) monotone_ = lam;
            if (slope_ != 0.0 || eps_ != 0.0) zero_ = 0.0;
            break;
        }
        case Kind::Tabulated: {
            double max_slope = -INFINITY;
            lipschitz_ = 0.0;
            for (std::size_t i = 1; i < knots_.size(); ++i) {
                const double s = (knots_[i].y - knots_[i - 1].y) / (knots_[i].x - knots_[i - 1].x);
                lipschitz_ = std::max(lipschitz_, std::abs(s));
                max_slope = std::max(max_slope, s);
            }
            if (max_slope < 0.0) monotone_ = -max_slope;
            for (std::size_t i = 0; i < knots_.size(); ++i) {
                if (knots_[i].y == 0.0) {
                    zero_ = knots_[i].x;
                    break;
                }
                if (i + 1 < knots_.size() && (knots_[i].y < 0.0) != (knots_[i + 1].y < 0.0) &&
                    knots_[i + 1].y != 0.0) {
                    const auto& l = knots_[i];
                    const auto& r = knots_[i + 1];
                    zero_ = l.x - l.y * (r.x - l.x) / (r.y - l.y);
                    break;
                }
            }
            break;
        }
    }
}

std::string DriftSpec::to_string() const {
    switch (kind_) {
        case Kind::Zero:
            return "zero";
        case Kind::Linear:
            return "linear:" + fmt(slope_);
        case Kind::LinSin:
            return "linsin:" + fmt(slope_) + ":" + fmt(eps_);
        case Kind::Tabulated: {
            std::ostringstream os;
            os << "table:";
            for (std::size_t i = 0; i < knots_.size(); ++i) {
                if (i) os << ',';
                os << fmt(knots_[i].x) << ':' << fmt(knots_[i].y);
            }
            return os.str();
        }
    }
    return "zero";
}

std::size_t audit_drift(const DriftSpec& drift, double lo, double hi, std::size_t points, double tol) {
    if (drift.kind() == DriftSpec::Kind::Tabulated) {
        lo = std::max(lo, drift.knots().front().x);
        hi = std::min(hi, drift.knots().back().x);
    }
    std::vector<double> xs(points), as(points);
    for (std::size_t i = 0; i < points; ++i) {
        xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
        as[i] = drift(xs[i]);
    }
    const double lip = drift.lipschitz();
    const auto lam = drift.monotone();
    std::size_t violations = 0;
    // All pairs at a stride keeps the audit O(points * 50).
    const std::size_t stride = std::max<std::size_t>(1, points / 50);
    for (std::size_t i = 0; i < points; ++i) {
        for (std::size_t j = i + 1; j < points; j += (j - i < 5 ? 1 : stride)) {
            const double dx = xs[i] - xs[j];
            const double da = as[i] - as[j];
            const double slack = tol * (1.0 + std::abs(da) + std::abs(dx));
            if (std::abs(da) > lip * std::abs(dx) + slack) ++violations;
            if (lam && da * dx > -*lam * dx * dx + slack) ++violations;
        }
    }
    if (auto x0 = drift.zero_point()) {
        const bool inside = drift.kind() != DriftSpec::Kind::Tabulated ||
                            (*x0 >= drift.knots().front().x && *x0 <= drift.knots().back().x);
        if (!inside || std::abs(drift(*x0)) > tol) ++violations;
    }
    return violations;
}

}  // namespace coalflow
