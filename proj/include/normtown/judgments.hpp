#pragma once

#include <map>
#include <string>
#include <vector>

#include "normtown/util.hpp"

namespace normtown::judgments {

// Verdicts for one simulation step. g is the full per-subtask completion
// snapshot after the step (monotone across steps); norm_verdicts maps norm id
// to a violation bit (1 = behavior broke the norm).
struct StepJudgment {
    int step = 0;
    std::vector<int> g;
    double goal_progress = 0.0;  // completed / K
    std::map<std::string, int> norm_verdicts;
    double norm_violation = 0.0;  // mean verdict, 0 when no norms in force
    double faithfulness = 0.0;    // profile-consistency score in [0,1]
    int context_awareness = 0;    // c bit
    int coherence = 0;            // h bit
    int parse_failures = 0;       // judge responses that failed to parse this step
    std::string location_type;    // where the target ended the step
    std::vector<std::string> partner_nationalities;  // one per partner; deduped on aggregation

    json to_json() const;
    static StepJudgment from_json(const json& j);
};

// Per-group slice of a day, keyed by location type or partner nationality.
struct MetricSlice {
    int steps = 0;
    double norm_violation = 0.0;
    double norm_adherence = 0.0;  // 1 - norm_violation

    json to_json() const;
    static MetricSlice from_json(const json& j);
};

// Aggregates over a full day (steps 0..T, so divide by T+1).
struct TrajectoryMetrics {
    int steps = 0;
    double goal_completion = 0.0;  // final-step goal_progress
    double norm_violation = 0.0;   // mean of per-step norm_violation
    double norm_adherence = 0.0;   // 1 - norm_violation
    double faithfulness = 0.0;
    double context_awareness = 0.0;
    double coherence = 0.0;
    int parse_failures = 0;
    std::map<std::string, MetricSlice> by_location;
    std::map<std::string, MetricSlice> by_partner_nationality;

    json to_json() const;
    static TrajectoryMetrics from_json(const json& j);
};

// Throws EmptyTrajectory when judgments is empty.
TrajectoryMetrics aggregate(const std::vector<StepJudgment>& judgments);

}  // namespace normtown::judgments
