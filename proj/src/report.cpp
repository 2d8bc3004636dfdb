#include "coalflow/report.hpp"

#include <algorithm>

namespace coalflow {

namespace {

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json to_json(const TailEstimate& t, std::optional<bool> pass) {
    Json j;
    j["estimate"] = t.probability;
    j["ci_low"] = t.ci_low;
    j["ci_high"] = t.ci_high;
    j["bound"] = opt(t.bound);
    j["pass"] = pass ? Json(*pass) : Json(nullptr);
    j["hits"] = t.hits;
    j["replicates"] = t.replicates;
    return j;
}

Json to_json(const KsResult& r) { return {{"statistic", r.statistic}, {"p_value", r.p_value}, {"n", r.n}}; }

Json to_json(const FitReport& f) {
    Json data = Json::array();
    for (const auto& [s, p] : f.data) data.push_back({s, p});
    return {{"rate", f.rate},
            {"constant", f.constant},
            {"r_squared", f.r_squared},
            {"low_r_squared", f.low_r_squared},
            {"data", data}};
}

Json to_json(const EscapeReport& e) {
    Json j = to_json(e.estimate, e.estimate.ci_low <= e.bound);
    j["bound"] = e.bound;
    j["horizon"] = e.horizon;
    j["level"] = e.level;
    j["direct_level"] = e.direct_level;
    j["direct_bound"] = e.direct_bound;
    j["in_valid_range"] = e.in_valid_range;
    j["verdict"] = to_string(e.verdict);
    return j;
}

Json to_json(const MomentSummary& m) {
    return {{"n", m.n},
            {"mean", m.mean},
            {"mean_se", m.mean_se},
            {"variance", m.variance},
            {"variance_se", m.variance_se}};
}

Json to_json(const StationaryPointEstimate& s) {
    return {{"eta", s.value},
            {"t0", s.stabilization_time},
            {"stabilized", s.stabilized},
            {"window", s.window_used},
            {"target_time", s.target_time}};
}

Json to_json(const PullbackStudy& s) {
    const double n = s.realizations ? static_cast<double>(s.realizations) : 1.0;
    return {{"realizations", s.realizations},
            {"stabilized", s.stabilized},
            {"stabilized_fraction", static_cast<double>(s.stabilized) / n},
            {"stationarity_checked", s.stationarity_checked},
            {"stationarity_pass", s.stationarity_pass},
            {"uniqueness_checked", s.uniqueness_checked},
            {"uniqueness_pass", s.uniqueness_pass},
            {"escaped", s.escaped},
            {"eta", to_json(s.eta)}};
}

Json to_json(const VarianceGrowthRow& r) {
    return {{"t", r.t}, {"moments", to_json(r.moments)}, {"ratio", r.ratio}};
}

Json to_json(const InvariantReport& r) {
    return {{"order_violations", r.order_violations},
            {"absorbing_violations", r.absorbing_violations},
            {"chain_violations", r.chain_violations},
            {"non_finite", r.non_finite},
            {"checked_steps", r.checked_steps}};
}

Json to_json(const FlowInvariantReport& r) {
    return {{"cocycle_violations", r.cocycle_violations},
            {"monotonicity_violations", r.monotonicity_violations},
            {"identity_violations", r.identity_violations},
            {"queries", r.queries},
            {"system", to_json(r.system)},
            {"total", r.total()}};
}

Json to_json(const CrossingAudit& a) {
    Json details = Json::array();
    for (const auto& d : a.details) {
        details.push_back({{"forward_id", d.forward_id}, {"backward_id", d.backward_id}, {"l", d.l}});
    }
    return {{"crossings", a.crossings},
            {"pairs_checked", a.pairs_checked},
            {"steps_checked", a.steps_checked},
            {"details", details}};
}

Json to_json(const FamilyAudit& a) {
    return {{"order_violations", a.order_violations},
            {"absorbing_violations", a.absorbing_violations},
            {"start_violations", a.start_violations}};
}

Json to_json(const RegressionReport& r) {
    return {{"slope", r.slope},
            {"standard_error", r.standard_error},
            {"increments", r.increments},
            {"information", r.information}};
}

Json to_json(const CovariationSlope& c) {
    return {{"slope", c.slope}, {"standard_error", c.standard_error}, {"steps", c.steps}};
}

Json to_json(const MartingaleReport& m) {
    return {{"increments", m.increments},
            {"mean", m.mean},
            {"z", m.z},
            {"mean_ok", m.mean_ok},
            {"variance", m.variance},
            {"expected_variance", m.expected_variance},
            {"chi2", m.chi2},
            {"chi2_low", m.chi2_low},
            {"chi2_high", m.chi2_high},
            {"variance_ok", m.variance_ok},
            {"lag1", m.lag1},
            {"lag1_z", m.lag1_z},
            {"lag1_ok", m.lag1_ok},
            {"pass", m.pass()}};
}

Json to_json(const NonexistenceReport& r) {
    return {{"degenerate", r.degenerate},
            {"inconclusive", r.inconclusive},
            {"a", r.a},
            {"b", r.b},
            {"meeting_time", r.meeting_time},
            {"reachable_from_before", r.reachable_from_before},
            {"start_times_checked", r.start_times_checked},
            {"threaded_end", r.threaded_end},
            {"adjacency_fraction", r.adjacency_fraction}};
}

Json to_json(const NonMeetingReport& r) {
    Json rows = Json::array();
    for (std::size_t i = 0; i < r.horizons.size(); ++i) {
        Json row = to_json(r.survival[i]);
        row["horizon"] = r.horizons[i];
        rows.push_back(row);
    }
    return {{"survival", rows}, {"positive", r.positive}, {"plateau", r.plateau}, {"decreasing", r.decreasing}};
}

Json flow_summary(const FlowRealization& flow, const StationaryPointEstimate& eta) {
    const auto& cfg = flow.config();
    const auto counts = flow.live_counts();
    Json j;
    j["seed"] = cfg.seed;
    j["replicate"] = cfg.replicate;
    j["drift"] = cfg.drift.to_string();
    j["window"] = {{"T", cfg.T}, {"H", cfg.H}};
    j["time_grid"] = {{"t_start", flow.grid().t_start}, {"dt", flow.grid().dt}, {"n_steps", flow.grid().n_steps}};
    if (cfg.injection) {
        j["injection_grid"] = {{"x_min", cfg.injection->x_min},
                               {"x_max", cfg.injection->x_max},
                               {"dx", cfg.injection->dx},
                               {"period", cfg.injection->period}};
    } else {
        j["injection_grid"] = nullptr;
    }
    j["escape_margin"] = flow.escape_margin();
    j["escaped"] = flow.escaped_count();
    j["live_count_max"] = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
    j["live_count_final"] = counts.empty() ? 0 : counts.back();
    j["stationary_point"] = to_json(eta);
    return j;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace coalflow
