#pragma once

#include <cstdint>

#include "normtown/backend.hpp"
#include "normtown/world.hpp"

namespace normtown::scripted {

// Deterministic target policy: walks toward the current subtask's location
// type (breadth-first next hop), performs a location action once there, and
// keeps conversations to a couple of turns. The town must outlive the
// backend.
backend::BackendPtr goal_seeker(const world::TownGraph& town);

// Deterministic supporting policy: strikes up conversation with the target
// when co-located and pushes back while conversing, otherwise waits.
backend::BackendPtr chatter();

// Uniform draw over the actions enumerable from the policy context (moves,
// talks, location actions with and without dialogue targets, phone calls and
// messages, wait). Seeded; repair attempts re-draw.
backend::BackendPtr random_agent(uint64_t seed);

// Deterministic judge: marks the current subtask done when the judged step
// shows a non-move action at the subtask's location type; flags a norm as
// violated only when the step's action or dialogue literally mentions the
// norm's id; answers 1 for profile and coherence bits.
backend::BackendPtr rule_judge();

// Stochastic judge for calibration experiments: reads the true decision from
// a "true_decision=yes|no" marker in the prompt, answers correctly with
// probability `admissibility`, and reports a single-token logprob so the
// sequence quality equals the emitted confidence. Draws are independent
// across sample_index.
backend::BackendPtr synthetic_judge(double admissibility, uint64_t seed);

}  // namespace normtown::scripted
