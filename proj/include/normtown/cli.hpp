#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "normtown/backend.hpp"
#include "normtown/world.hpp"

namespace normtown::cli {

// Backend selector strings:
//   scripted:goal_seeker          plan-following simulated agent (needs the town)
//   scripted:chatter              norm-pressure simulated agent
//   scripted:random[:SEED]        uniform legal-action agent
//   scripted:rule_judge           deterministic judge over the prompt contents
//   scripted:synthetic[:P[:SEED]] judge that is right with probability P
//   remote:MODEL[@ENDPOINT]       chat-completions HTTP backend
//   replay:FILE[,INNER]           replay cache; misses go to INNER when given
//   record:FILE,INNER             INNER plus an append-only recording of calls
// Throws BadBackendSpec on anything else.
backend::BackendPtr make_backend(const std::string& spec, const world::TownGraph* town,
                                 uint64_t seed);

// Default risk levels for the evaluate command (six levels, 0.05 to 0.35).
std::vector<double> default_epsilon_grid();

// Full command-line driver; args excludes the program name. Returns the
// process exit status. Streams are injected so tests can capture output.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace normtown::cli
