#pragma once

#include <optional>
#include <string>
#include <vector>

#include "normtown/backend.hpp"
#include "normtown/population.hpp"
#include "normtown/rng.hpp"
#include "normtown/util.hpp"
#include "normtown/world.hpp"

namespace normtown::goals {

inline constexpr int kDayStart = 7 * 60;   // 07:00
inline constexpr int kDayEnd = 22 * 60;    // 22:00
inline constexpr int kMinSubtasks = 4;
inline constexpr int kMaxSubtasks = 6;

struct Subtask {
    std::string id;
    std::string title;
    std::string desc;
    world::LocationType location_type = world::LocationType::Apartment;
    int window_start = kDayStart;  // minutes since midnight, [start, end)
    int window_end = kDayEnd;

    json to_json() const;
    static Subtask from_json(const json& j);
};

struct GoalPlan {
    std::string target_id;
    std::string goal_text;
    std::vector<Subtask> subtasks;  // windows tile the day in order
    bool templated_fallback = false;  // set when the backend plan was replaced

    json to_json() const;
    static GoalPlan from_json(const json& j);
};

struct PlanIssue {
    std::string what;
};

// Structural checks: 4-6 subtasks, unique ids, windows inside [07:00, 22:00),
// consecutive and non-overlapping (each window starts where the previous
// ended), each location type present in the town.
std::vector<PlanIssue> validate_plan(const GoalPlan& plan, const world::TownGraph& town);

// Deterministic plan from the profile: work blocks at the agent's job
// location type, meals, leisure, and home anchors, with window boundaries
// jittered on the half-hour grid.
GoalPlan templated_goal_plan(const population::AgentProfile& profile,
                             const world::TownGraph& town, Rng& rng);

// Asks the backend to plan the day, re-prompting on structurally invalid
// replies; after `attempts` failures returns templated_goal_plan with
// templated_fallback set. Employed profiles must get at least one subtask at
// their job location type for the reply to count as valid.
GoalPlan generate_goal_plan(const population::AgentProfile& profile, const world::TownGraph& town,
                            backend::Backend& backend, Rng& rng, int attempts = 3);

}  // namespace normtown::goals
