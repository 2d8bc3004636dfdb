#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "coalflow/analysis.hpp"
#include "coalflow/coalescing.hpp"
#include "coalflow/dual.hpp"
#include "coalflow/flow.hpp"

namespace coalflow {

using Json = nlohmann::json;

/// Statistical records carry estimate, ci_low, ci_high, bound and pass; bound
/// and pass are null when not applicable.
Json to_json(const TailEstimate& t, std::optional<bool> pass = std::nullopt);
Json to_json(const KsResult& r);
Json to_json(const FitReport& f);
Json to_json(const EscapeReport& e);
Json to_json(const MomentSummary& m);
Json to_json(const StationaryPointEstimate& s);
Json to_json(const PullbackStudy& s);  // summary only, no per-realization list
Json to_json(const VarianceGrowthRow& r);
Json to_json(const InvariantReport& r);
Json to_json(const FlowInvariantReport& r);
Json to_json(const CrossingAudit& a);
Json to_json(const FamilyAudit& a);
Json to_json(const RegressionReport& r);
Json to_json(const CovariationSlope& c);
Json to_json(const MartingaleReport& m);
Json to_json(const NonexistenceReport& r);
Json to_json(const NonMeetingReport& r);

/// Summary of one flow realization: seed, window, grid, live counts, eta.
Json flow_summary(const FlowRealization& flow, const StationaryPointEstimate& eta);

/// Two-space indented dump with a trailing newline; keys are sorted, so equal
/// values give equal bytes.
std::string dump(const Json& j);

}  // namespace coalflow
