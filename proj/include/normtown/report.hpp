#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "normtown/conformal.hpp"
#include "normtown/judgments.hpp"
#include "normtown/population.hpp"
#include "normtown/util.hpp"

namespace normtown::report {

// Per-step slice of a finished run, enough for the step-level groupings.
struct StepSummary {
    int step = 0;
    std::string location_type;
    std::vector<std::string> partner_nationalities;
    double norm_violation = 0.0;
    double goal_progress = 0.0;
    double faithfulness = 0.0;
    int context_awareness = 0;
    int coherence = 0;

    json to_json() const;
    static StepSummary from_json(const json& j);
};

// One simulated day, ready for aggregation.
struct RunResult {
    std::string target_id;
    std::string target_nationality;
    uint64_t seed = 0;
    std::string config_hash;
    judgments::TrajectoryMetrics metrics;
    std::vector<StepSummary> steps;

    json to_json() const;
    static RunResult from_json(const json& j);
};

// Builds a RunResult from a trajectory header plus its judgment log. The
// header must name a target present in pop.
RunResult make_run_result(const json& trajectory_header,
                          const std::vector<judgments::StepJudgment>& judgments,
                          const population::Population& pop);

// Number of distinct nationalities among the agents the target interacted
// with over the day; 0 when the day had no interactions at all. With
// include_target the target's own nationality joins the set on any day that
// had at least one interaction.
int culture_count(const RunResult& run, bool include_target = false);

// Group label for a culture count; 0 maps to its own "solitary" bucket.
std::string culture_bucket(int count);

enum class GroupKey { nationality, location, culture_count };

std::string to_string(GroupKey key);
GroupKey group_key_from(const std::string& name);

struct GroupRow {
    std::string group;
    int n = 0;  // runs for run-level keys, steps for the location key
    double norm_adherence = 0.0;
    double goal_completion = 0.0;
    double faithfulness = 0.0;
    double context_awareness = 0.0;
    double coherence = 0.0;

    json to_json() const;
    static GroupRow from_json(const json& j);
};

struct GroupedReport {
    GroupKey key = GroupKey::nationality;
    std::vector<GroupRow> rows;  // sorted by group label

    json to_json() const;
    static GroupedReport from_json(const json& j);
};

// nationality and culture_count group whole runs; location groups individual
// steps so one run feeds every location type it visited. Throws EmptyResults
// on empty input.
GroupedReport group_by(const std::vector<RunResult>& results, GroupKey key,
                       bool include_target_nationality = false);

// Writes csv (stable columns, floats at 4 decimals) or json.
void emit_report(const GroupedReport& report, const std::string& format,
                 const std::string& path);
std::string render_report(const GroupedReport& report, const std::string& format);

// One calibrate-then-evaluate outcome for a judgment task at one risk level.
struct ConformalRow {
    std::string task;
    double epsilon = 0.0;
    conformal::EvalResult eval;
    conformal::ConformalConfig config;
};

void emit_conformal_report(const std::vector<ConformalRow>& rows, const std::string& format,
                           const std::string& path);
std::string render_conformal_report(const std::vector<ConformalRow>& rows,
                                    const std::string& format);

}  // namespace normtown::report
