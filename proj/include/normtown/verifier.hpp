#pragma once

#include <map>
#include <string>
#include <vector>

#include "normtown/backend.hpp"
#include "normtown/engine.hpp"
#include "normtown/judgments.hpp"
#include "normtown/population.hpp"
#include "normtown/world.hpp"

namespace normtown::verifier {

// Norms are judged in batches of at most this many per query.
inline constexpr int kNormBatchSize = 40;

struct VerifierConfig {
    // Default scores faithfulness with one overall plausibility bit; opting in
    // asks one question per profile attribute and averages the bits.
    bool per_attribute_faithfulness = false;
    backend::CompletionOptions options;
};

// Read-only snapshot of everything a judge query can reference.
struct VerifierContext {
    const population::AgentProfile* target = nullptr;
    const goals::GoalPlan* plan = nullptr;
    int current_subtask_index = -1;  // -1 when the plan is already finished
    std::vector<std::string> completed_subtask_ids;
    // Steps since the last subtask completion, oldest first, ending with the
    // step under judgment.
    std::vector<const engine::TrajectoryStep*> segment;
    const engine::TrajectoryStep* current = nullptr;
    std::vector<world::NormRecord> norms_in_force;
    std::string world_facts;
    // Nationalities of this step's conversation partners, for breakdowns.
    std::vector<std::string> partner_nationalities;
};

struct GoalJudgment {
    int done = 0;
    int parse_failures = 0;
};

struct NormJudgment {
    std::map<std::string, int> verdicts;  // norm id -> violation bit
    double violation = 0.0;               // mean verdict, 0 when no norms in force
    int parse_failures = 0;
};

struct ProfileJudgment {
    double score = 0.0;
    int parse_failures = 0;
};

struct CoherenceJudgment {
    int a_hat = 0;  // interaction coherence
    int b_hat = 0;  // context awareness
    int parse_failures = 0;
};

// Individual judge queries. Unparseable responses score 0 and bump
// parse_failures; they never throw.
GoalJudgment judge_goal(backend::Backend& judge, const VerifierContext& ctx,
                        const VerifierConfig& config);
NormJudgment judge_norms(backend::Backend& judge, const VerifierContext& ctx,
                         const VerifierConfig& config);
ProfileJudgment judge_profile(backend::Backend& judge, const VerifierContext& ctx,
                              const VerifierConfig& config);
CoherenceJudgment judge_coherence(backend::Backend& judge, const VerifierContext& ctx,
                                  const VerifierConfig& config);

// All five metrics for one step. g marks the already-completed subtasks plus
// the current one when the goal judge says it is done.
judgments::StepJudgment judge_step(backend::Backend& judge, const VerifierContext& ctx,
                                   const VerifierConfig& config);

// Stateful judge for engine::run_day: accumulates the trajectory segment
// since the last completion and resets it whenever the current subtask
// completes.
engine::StepJudge make_online_hook(backend::BackendPtr judge, VerifierConfig config);

// Re-judges a serialized trajectory without live simulation state. Completion
// bits are re-derived from this judge's own verdicts, step by step.
std::vector<judgments::StepJudgment> verify_trajectory(backend::Backend& judge,
                                                       const engine::Trajectory& trajectory,
                                                       const population::Population& pop,
                                                       const world::NormSet& norms,
                                                       const goals::GoalPlan& plan,
                                                       const VerifierConfig& config);

// Human-readable facts line used in judge prompts (time, place, who is
// present). Exposed for tests.
std::string world_facts_line(const engine::TrajectoryStep& step,
                             const population::Population& pop);

}  // namespace normtown::verifier
