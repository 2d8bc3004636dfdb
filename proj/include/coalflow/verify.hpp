#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coalflow/report.hpp"

namespace coalflow {

/// Outcome of one acceptance check. Underpowered marks a statistical check
/// run below its full replicate count whose exact parts all held.
enum class Verdict { Pass, Fail, Underpowered };

const char* to_string(Verdict v);

struct VerifyOptions {
    std::uint64_t seed = 20240917;
    /// Multiplies every replicate / realization count. Below 1 the
    /// statistical criteria report Underpowered instead of Pass or Fail.
    double scale = 1.0;
    /// Fault hook: meeting detection without the bridge correction in
    /// criterion 2. The meeting-time law must then be rejected.
    bool fault_no_bridge = false;
    /// Scale used by the determinism check for its two inner runs.
    double determinism_scale = 0.01;
};

struct CriterionResult {
    int id = 0;
    std::string title;
    Verdict verdict = Verdict::Fail;
    Json measured;
};

inline constexpr int kCriterionCount = 9;

/// Runs acceptance criterion `id` (1..9). InputError for other ids.
CriterionResult verify_criterion(int id, const VerifyOptions& options);

/// Criteria in `ids` in the given order.
std::vector<CriterionResult> verify_all(const std::vector<int>& ids, const VerifyOptions& options);

Json to_json(const CriterionResult& r);

/// "[PASS] C<id> <title>: <headline numbers>"
std::string verdict_line(const CriterionResult& r);

/// Report for a set of results: options, one record per criterion, and
/// overall pass (no Fail). Contains no timing, so it is byte-reproducible.
Json verify_report(const std::vector<CriterionResult>& results, const VerifyOptions& options);

}  // namespace coalflow
