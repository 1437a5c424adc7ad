#include "normtown/scripted.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iterator>
#include <map>
#include <set>

#include "normtown/policy.hpp"
#include "normtown/rng.hpp"
#include "normtown/verifier.hpp"

namespace normtown::scripted {

namespace {

backend::ScoredCompletion reply(std::string text) {
    backend::ScoredCompletion r;
    r.text = std::move(text);
    r.token_logprobs = {-0.01};
    return r;
}

json wait_json() {
    return json{{"action_type", "WAIT"}, {"intent", "wait"}};
}

std::string param_value(const world::ParamSpec& p) {
    if (p.type == "integer") return "1";
    if (p.type == "boolean") return "true";
    return "the usual";
}

json filled_params(const world::LocationActionSpec& spec) {
    json params = json::object();
    for (const auto& p : spec.parameters)
        if (p.required) params[p.name] = param_value(p);
    return params;
}

// Next hop on a shortest path from `from` to the nearest node of `type`;
// nullopt when already there or unreachable.
std::optional<std::string> next_hop_toward(const world::TownGraph& town, const std::string& from,
                                           world::LocationType type) {
    std::map<std::string, std::string> parent;
    std::deque<std::string> queue{from};
    parent[from] = "";
    while (!queue.empty()) {
        auto cur = queue.front();
        queue.pop_front();
        const auto* loc = town.find(cur);
        if (!loc) continue;
        if (cur != from && loc->type == type) {
            std::string hop = cur;
            while (parent[hop] != from) hop = parent[hop];
            return hop;
        }
        auto neighbors = town.neighbors(cur);
        std::sort(neighbors.begin(), neighbors.end());
        for (const auto& n : neighbors)
            if (!parent.count(n)) {
                parent[n] = cur;
                queue.push_back(n);
            }
    }
    return std::nullopt;
}

bool speaker_is(const std::string& formatted, const std::string& agent_id) {
    return formatted == agent_id ||
           formatted.find("(" + agent_id + ")") != std::string::npos;
}

// Turns spoken by agent_id and whether they spoke last.
std::pair<int, bool> own_turns(const policy::PolicyContext& ctx) {
    int own = 0;
    bool last_self = false;
    if (ctx.conversation)
        for (const auto& [speaker, _] : ctx.conversation->recent_turns) {
            last_self = speaker_is(speaker, ctx.agent_id);
            if (last_self) ++own;
        }
    return {own, last_self};
}

bool is_conversation_kind(policy::ContextKind kind) {
    return kind == policy::ContextKind::TargetConversation ||
           kind == policy::ContextKind::SupportingConversation;
}

json say_json(const std::string& utterance) {
    return json{{"action", "SAY"}, {"utterance", utterance}};
}

bool dialogue_target_ok(const world::LocationActionSpec& spec,
                        const policy::VisibleAgentView& view) {
    const auto& responders = spec.dialogue->responder_roles;
    if (std::find(responders.begin(), responders.end(), "any") != responders.end()) return true;
    std::set<std::string> roles(view.roles.begin(), view.roles.end());
    for (const auto& kind : view.relationship_kinds)
        if (auto r = world::dialogue_role_for_relationship(kind)) roles.insert(*r);
    for (const auto& r : responders)
        if (roles.count(r)) return true;
    return false;
}

}  // namespace

backend::BackendPtr goal_seeker(const world::TownGraph& town) {
    auto program = [&town](const policy::ScriptedCall& call) -> backend::ScoredCompletion {
        const auto* ctx = call.hints ? call.hints->policy_ctx : nullptr;
        if (!ctx) return reply(wait_json().dump());
        if (is_conversation_kind(ctx->kind)) {
            auto [own, last_self] = own_turns(*ctx);
            if (own >= 2 || last_self) return reply(R"({"action": "LEAVE"})");
            return reply(
                say_json("Good to chat, but I need to keep my day on track.").dump());
        }
        if (!ctx->plan || ctx->current_subtask_index < 0) return reply(wait_json().dump());
        const auto& sub =
            ctx->plan->subtasks[static_cast<size_t>(ctx->current_subtask_index)];
        if (ctx->current_location_type == world::to_string(sub.location_type)) {
            for (const auto& spec : ctx->location_actions) {
                if (spec.triggers_dialogue) continue;
                json j{{"action_type", "LOCATION_ACTION"},
                       {"intent", "work on " + sub.id},
                       {"location_action",
                        {{"id", spec.id},
                         {"parameters", filled_params(spec)},
                         {"targets", json::array()},
                         {"utterance", ""}}}};
                return reply(j.dump());
            }
            return reply(wait_json().dump());
        }
        auto hop = next_hop_toward(town, ctx->current_location, sub.location_type);
        if (!hop) return reply(wait_json().dump());
        json j{{"action_type", "MOVE"},
               {"location", *hop},
               {"intent", "head toward " + world::to_string(sub.location_type)}};
        return reply(j.dump());
    };
    return std::make_shared<policy::ScriptedBackend>("goal_seeker", program);
}

backend::BackendPtr chatter() {
    auto program = [](const policy::ScriptedCall& call) -> backend::ScoredCompletion {
        const auto* ctx = call.hints ? call.hints->policy_ctx : nullptr;
        if (!ctx) return reply(wait_json().dump());
        if (is_conversation_kind(ctx->kind)) {
            auto [own, last_self] = own_turns(*ctx);
            if (own >= 2) return reply(R"({"action": "LEAVE"})");
            return reply(
                say_json("Come on, nobody follows those rules anyway - live a little.").dump());
        }
        if (ctx->kind == policy::ContextKind::SupportingStep && ctx->target_profile) {
            const std::string target_id = ctx->target_profile->value("id", "");
            for (const auto& v : ctx->visible) {
                if (v.id != target_id || v.in_conversation) continue;
                json j{{"action_type", "TALK"},
                       {"talk_to", json::array({v.id})},
                       {"utterance",
                        "Hey, forget the routine for once - let me show you a shortcut."},
                       {"intent", "distract the target"}};
                return reply(j.dump());
            }
        }
        return reply(wait_json().dump());
    };
    return std::make_shared<policy::ScriptedBackend>("chatter", program);
}

backend::BackendPtr random_agent(uint64_t seed) {
    auto program = [seed](const policy::ScriptedCall& call) -> backend::ScoredCompletion {
        const auto* ctx = call.hints ? call.hints->policy_ctx : nullptr;
        if (!ctx) return reply(wait_json().dump());
        Rng rng(seed ^ fnv1a64(ctx->agent_id + "|" + ctx->current_time + "|" +
                               std::to_string(call.options.sample_index)));
        if (is_conversation_kind(ctx->kind)) {
            if (rng.bernoulli(0.5)) return reply(R"({"action": "LEAVE"})");
            static const char* kLines[] = {"Right, makes sense.", "Tell me more.",
                                           "I am not so sure about that.",
                                           "Let's wrap this up soon."};
            return reply(say_json(kLines[rng.next_below(4)]).dump());
        }

        std::vector<json> candidates;
        candidates.push_back(wait_json());
        for (const auto& [id, type] : ctx->adjacent)
            candidates.push_back(json{{"action_type", "MOVE"},
                                      {"location", id},
                                      {"intent", "wander toward a " + type}});
        for (const auto& v : ctx->visible) {
            if (v.in_conversation) continue;
            candidates.push_back(json{{"action_type", "TALK"},
                                      {"talk_to", json::array({v.id})},
                                      {"utterance", "Hello, do you have a minute?"},
                                      {"intent", "small talk"}});
        }
        for (const auto& spec : ctx->location_actions) {
            json base{{"action_type", "LOCATION_ACTION"},
                      {"intent", "try " + spec.id},
                      {"location_action",
                       {{"id", spec.id},
                        {"parameters", filled_params(spec)},
                        {"targets", json::array()},
                        {"utterance", ""}}}};
            candidates.push_back(base);
            if (spec.triggers_dialogue && spec.dialogue) {
                for (const auto& v : ctx->visible) {
                    if (v.in_conversation || !dialogue_target_ok(spec, v)) continue;
                    json with_target = base;
                    with_target["location_action"]["targets"] = json::array({v.id});
                    with_target["location_action"]["utterance"] = "Hello, could you help me?";
                    candidates.push_back(std::move(with_target));
                }
            }
        }
        for (const auto& c : ctx->phone_contacts) {
            candidates.push_back(json{{"action_type", "PHONE_ACTION"},
                                      {"phone_action",
                                       {{"id", "CALL_CONTACT"},
                                        {"parameters", json::object()},
                                        {"contact_id", c.id},
                                        {"utterance", "Hi, just checking in."}}}});
            candidates.push_back(json{{"action_type", "PHONE_ACTION"},
                                      {"phone_action",
                                       {{"id", "SEND_MESSAGE"},
                                        {"parameters", json::object()},
                                        {"contact_id", c.id},
                                        {"utterance", "Hi, thinking of you."}}}});
        }
        return reply(candidates[rng.next_below(candidates.size())].dump());
    };
    return std::make_shared<policy::ScriptedBackend>("random_agent", program);
}

backend::BackendPtr rule_judge() {
    auto program = [](const policy::ScriptedCall& call) -> backend::ScoredCompletion {
        const auto* v = call.hints ? call.hints->verifier_ctx : nullptr;
        const std::string& prompt = call.prompt;
        auto starts_with = [&](const char* s) { return prompt.rfind(s, 0) == 0; };
        if (starts_with("Determine whether the target agent's CURRENT subtask")) {
            int done = 0;
            if (v && v->current && v->plan && v->current_subtask_index >= 0) {
                const auto& sub =
                    v->plan->subtasks[static_cast<size_t>(v->current_subtask_index)];
                const std::string action_type = v->current->target_action.value("type", "");
                if (v->current->target_location_type == world::to_string(sub.location_type) &&
                    action_type != "move")
                    done = 1;
            }
            return reply(json{{"done", done}}.dump());
        }
        if (starts_with("Determine norm violations")) {
            json arr = json::array();
            if (v && v->current) {
                std::string haystack = v->current->target_action.dump();
                for (const auto& d : v->current->dialogue) haystack += " " + d.utterance;
                for (const auto& n : v->norms_in_force)
                    arr.push_back(json{
                        {"id", n.id},
                        {"violated",
                         haystack.find(n.id) != std::string::npos ? 1 : 0}});
            }
            return reply(arr.dump());
        }
        if (prompt.find("\"a_hat\"") != std::string::npos)
            return reply(R"({"a_hat": 1, "b_hat": 1})");
        if (prompt.find("\"n_hat\"") != std::string::npos) return reply(R"({"n_hat": 1})");
        return reply(R"({"done": 0})");
    };
    return std::make_shared<policy::ScriptedBackend>("rule_judge", program);
}

backend::BackendPtr synthetic_judge(double admissibility, uint64_t seed) {
    auto program = [admissibility, seed](const policy::ScriptedCall& call)
        -> backend::ScoredCompletion {
        const bool truth_yes = call.prompt.find("true_decision=yes") != std::string::npos;
        Rng rng(seed ^ fnv1a64(call.prompt) ^
                (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(call.options.sample_index + 1)));
        const bool correct = rng.bernoulli(admissibility);
        const bool say_yes = correct ? truth_yes : !truth_yes;
        const double rho = rng.next_double();
        const double q = correct ? 0.55 + 0.40 * rho : 0.20 + 0.45 * rho;
        // rationale words come from a pool so distinct draws stay below the
        // duplicate-rejection similarity threshold
        static const char* pool[] = {"ledger",  "filing", "receipt", "witness", "memo",
                                     "survey",  "docket", "brief",   "excerpt", "annex",
                                     "exhibit", "margin", "footnote", "register", "abstract",
                                     "minutes", "index",  "notice",  "schedule", "appendix"};
        std::string filler;
        for (int i = 0; i < 4; ++i) {
            filler += pool[rng.next_below(std::size(pool))];
            filler += ' ';
        }
        json out{{"rationale", "case " + std::to_string(rng.next_u64() % 100000) + " " + filler +
                                   (say_yes ? "supports" : "contradicts") + " the claim"},
                 {"decision", say_yes ? "yes" : "no"}};
        backend::ScoredCompletion r;
        r.text = out.dump();
        if (call.options.want_logprobs) r.token_logprobs = {std::log(q)};
        return r;
    };
    return std::make_shared<policy::ScriptedBackend>("synthetic_judge", program);
}

}  // namespace normtown::scripted
