#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "normtown/actions.hpp"
#include "normtown/backend.hpp"
#include "normtown/goals.hpp"
#include "normtown/judgments.hpp"
#include "normtown/policy.hpp"
#include "normtown/population.hpp"
#include "normtown/util.hpp"
#include "normtown/world.hpp"

namespace normtown::engine {

inline constexpr int kStepMinutes = 30;
inline constexpr int kConversationStepMinutes = 5;
inline constexpr int kMaxSteps = 30;
inline constexpr int kConversationTurnCap = 12;

// Simulated day clock. advance returns false when the next step would start
// after the day's end, leaving the clock unchanged.
struct SimClock {
    int tau = goals::kDayStart;
    int step = 0;

    bool advance(bool target_in_conversation) {
        int next = tau + (target_in_conversation ? kConversationStepMinutes : kStepMinutes);
        if (next > goals::kDayEnd) return false;
        tau = next;
        ++step;
        return true;
    }
};

struct ConversationTurn {
    std::string speaker;
    std::string utterance;
};

struct Conversation {
    std::string id;
    std::string location_id;
    std::vector<std::string> participants;
    std::vector<ConversationTurn> turns;
    bool active = true;
    bool involves_target = false;

    json to_json() const;
};

struct MemoryRecord {
    int step = 0;
    int tau = 0;
    std::string location_id;
    std::string text;
};

struct PhoneContact {
    std::string id;
    std::string kind;
};

// Mutable world state for one simulated day. Population, town, assignment and
// norms are borrowed and must outlive the state.
struct SimState {
    const population::Population* pop = nullptr;
    const world::TownGraph* town = nullptr;
    const world::Assignment* assignment = nullptr;
    const world::NormSet* norms = nullptr;
    const goals::GoalPlan* plan = nullptr;
    std::string target_id;

    SimClock clock;
    std::map<std::string, std::string> agent_location;
    std::map<std::string, std::vector<MemoryRecord>> memories;
    std::vector<Conversation> conversations;
    std::map<std::string, int> conversation_of;  // agent id -> index into conversations
    std::vector<int> theta;                      // per-subtask completion bits
    std::map<std::string, std::vector<population::RelationshipEdge>> edges_by_src;
    std::map<std::string, std::vector<PhoneContact>> phonebook;
    int conversation_counter = 0;

    const population::AgentProfile& profile_of(const std::string& agent_id) const;
    const world::Location& location_of(const std::string& agent_id) const;
    std::vector<std::string> agents_at(const std::string& location_id) const;
    std::vector<std::string> visible_to(const std::string& agent_id) const;
    bool in_active_conversation(const std::string& agent_id) const;
    Conversation* active_conversation(const std::string& agent_id);
    const Conversation* active_conversation(const std::string& agent_id) const;
    std::vector<std::string> roles_of(const std::string& agent_id) const;
    std::vector<std::string> relationship_kinds(const std::string& src,
                                                const std::string& dst) const;
    // First incomplete subtask, or -1 when the plan is finished.
    int current_subtask_index() const;
};

SimState init_state(const population::Population& pop, const world::TownGraph& town,
                    const world::Assignment& assignment, const world::NormSet& norms,
                    const goals::GoalPlan& plan, const std::string& target_id);

// Empty result means the action is legal for the agent in the current state.
std::optional<std::string> validate_action(const SimState& state, const std::string& agent_id,
                                           const Action& action);

// Deterministic enumeration of the legal action set (moves, talks, location
// actions with required parameters filled, phone actions, wait).
std::vector<Action> legal_actions(const SimState& state, const std::string& agent_id);

// ---- trajectory -------------------------------------------------------------

struct DialogueTurnRecord {
    std::string conversation_id;
    std::string location_id;
    std::string speaker;
    std::string utterance;

    json to_json() const;
    static DialogueTurnRecord from_json(const json& j);
};

struct VisibleAgentRecord {
    std::string id;
    std::string nationality;

    json to_json() const;
    static VisibleAgentRecord from_json(const json& j);
};

// One serialized step: everything the verifier and the audits need without
// access to live state.
struct TrajectoryStep {
    int step = 0;
    int tau = 0;
    std::string start_location;  // target location when the step began
    json target_action;          // action_to_json form, {} when the target spoke in a conversation
    bool action_coerced = false;
    std::vector<DialogueTurnRecord> dialogue;
    std::string target_location;  // after the step
    std::string target_location_type;
    std::vector<VisibleAgentRecord> visible;
    std::vector<std::string> norm_ids_in_force;
    std::vector<int> theta;
    bool target_in_conversation = false;  // after the step; controls the next clock advance
    std::vector<std::string> partner_ids;

    json to_json() const;
    static TrajectoryStep from_json(const json& j);
};

struct Trajectory {
    json header;  // target_id, seed, config_hash, plan, start_location
    std::vector<TrajectoryStep> steps;
    std::vector<judgments::StepJudgment> judgments;  // may be empty (post-hoc runs)

    void save_jsonl(const std::string& path) const;
    static Trajectory load_jsonl(const std::string& path);
};

// Judges one applied step. Receives live state plus the step record being
// finalized; returns the judgment whose g bits the engine folds into theta.
using StepJudge =
    std::function<judgments::StepJudgment(const SimState&, const TrajectoryStep&)>;

struct RunConfig {
    int max_steps = kMaxSteps;
    backend::CompletionOptions target_options;
    backend::CompletionOptions supporting_options;
    std::string challenge_style = "subtle social pressure";
    // Supporting agents are driven only when co-located with the target.
    bool drive_colocated_only = true;
    uint64_t seed = 0;
    std::string config_hash;
};

Trajectory run_day(SimState& state, backend::Backend& target_backend,
                   backend::Backend& supporting_backend, const RunConfig& config,
                   const StepJudge& judge);

// Replays a serialized trajectory against a fresh state built from the same
// inputs, re-validating every action and clock advance. Returns error strings,
// empty when the trajectory is internally consistent.
std::vector<std::string> audit_trajectory(const Trajectory& trajectory,
                                          const population::Population& pop,
                                          const world::TownGraph& town,
                                          const world::Assignment& assignment,
                                          const world::NormSet& norms,
                                          const goals::GoalPlan& plan);

// Context builders shared by run_day and post-hoc tooling.
policy::PolicyContext make_step_context(const SimState& state, const std::string& agent_id,
                                        const RunConfig& config);
policy::PolicyContext make_conversation_context(const SimState& state,
                                                const std::string& agent_id,
                                                const Conversation& conversation,
                                                const RunConfig& config);

}  // namespace normtown::engine
