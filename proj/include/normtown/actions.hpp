#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "normtown/util.hpp"

namespace normtown::engine {

struct MoveAction {
    std::string location;
};

struct TalkAction {
    std::vector<std::string> targets;  // agent ids, resolved
    std::string utterance;
    std::string intent;
};

struct LocationAction {
    std::string action_id;
    std::map<std::string, std::string> parameters;
    std::vector<std::string> targets;  // dialogue partners when triggered
    std::string utterance;
};

struct PhoneAction {
    std::string kind;  // "call" | "message"
    std::string contact_id;
    std::string content;
};

struct WaitAction {};

using Action = std::variant<MoveAction, TalkAction, LocationAction, PhoneAction, WaitAction>;

json action_to_json(const Action& a);
Action action_from_json(const json& j);

// Short human-readable summary used in memory records and observations.
std::string action_summary(const Action& a);

}  // namespace normtown::engine
