#include "normtown/engine.hpp"

#include <algorithm>
#include <set>

#include "normtown/errors.hpp"

namespace normtown::engine {

namespace {

std::vector<std::string> set_to_vector(const std::set<std::string>& s) {
    return {s.begin(), s.end()};
}

}  // namespace

json Conversation::to_json() const {
    json turn_arr = json::array();
    for (const auto& t : turns)
        turn_arr.push_back(json{{"speaker", t.speaker}, {"utterance", t.utterance}});
    return json{{"id", id},
                {"location_id", location_id},
                {"participants", participants},
                {"turns", turn_arr},
                {"active", active},
                {"involves_target", involves_target}};
}

// ---- state ------------------------------------------------------------------

const population::AgentProfile& SimState::profile_of(const std::string& agent_id) const {
    const auto* p = pop->find(agent_id);
    if (!p) throw UnknownTarget("unknown agent '" + agent_id + "'");
    return *p;
}

const world::Location& SimState::location_of(const std::string& agent_id) const {
    auto it = agent_location.find(agent_id);
    if (it == agent_location.end()) throw UnknownTarget("agent '" + agent_id + "' is unplaced");
    const auto* loc = town->find(it->second);
    if (!loc) throw UnknownLocation("location '" + it->second + "' not in town");
    return *loc;
}

std::vector<std::string> SimState::agents_at(const std::string& location_id) const {
    std::vector<std::string> out;
    for (const auto& [agent, loc] : agent_location)
        if (loc == location_id) out.push_back(agent);
    return out;  // sorted: map iteration order
}

std::vector<std::string> SimState::visible_to(const std::string& agent_id) const {
    auto it = agent_location.find(agent_id);
    if (it == agent_location.end()) throw UnknownTarget("agent '" + agent_id + "' is unplaced");
    std::vector<std::string> out;
    for (const auto& [agent, loc] : agent_location)
        if (loc == it->second && agent != agent_id) out.push_back(agent);
    return out;
}

bool SimState::in_active_conversation(const std::string& agent_id) const {
    return active_conversation(agent_id) != nullptr;
}

Conversation* SimState::active_conversation(const std::string& agent_id) {
    auto it = conversation_of.find(agent_id);
    if (it == conversation_of.end()) return nullptr;
    auto& conv = conversations[static_cast<size_t>(it->second)];
    return conv.active ? &conv : nullptr;
}

const Conversation* SimState::active_conversation(const std::string& agent_id) const {
    auto it = conversation_of.find(agent_id);
    if (it == conversation_of.end()) return nullptr;
    const auto& conv = conversations[static_cast<size_t>(it->second)];
    return conv.active ? &conv : nullptr;
}

std::vector<std::string> SimState::roles_of(const std::string& agent_id) const {
    const auto& loc = location_of(agent_id);
    return set_to_vector(world::roles_at(profile_of(agent_id), loc.id, loc.type, *assignment));
}

std::vector<std::string> SimState::relationship_kinds(const std::string& src,
                                                      const std::string& dst) const {
    std::vector<std::string> out;
    auto scan = [&](const std::string& a, const std::string& b) {
        auto it = edges_by_src.find(a);
        if (it == edges_by_src.end()) return;
        for (const auto& e : it->second)
            if (e.dst == b) out.push_back(e.kind);
    };
    scan(src, dst);
    scan(dst, src);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

int SimState::current_subtask_index() const {
    for (size_t i = 0; i < theta.size(); ++i)
        if (!theta[i]) return static_cast<int>(i);
    return -1;
}

SimState init_state(const population::Population& pop, const world::TownGraph& town,
                    const world::Assignment& assignment, const world::NormSet& norms,
                    const goals::GoalPlan& plan, const std::string& target_id) {
    SimState state;
    state.pop = &pop;
    state.town = &town;
    state.assignment = &assignment;
    state.norms = &norms;
    state.plan = &plan;
    state.target_id = target_id;
    state.profile_of(target_id);  // existence check
    state.theta.assign(plan.subtasks.size(), 0);
    for (const auto& agent : pop.agents) {
        auto it = assignment.home.find(agent.id);
        if (it == assignment.home.end())
            throw NoApartment("agent '" + agent.id + "' has no home assignment");
        state.agent_location[agent.id] = it->second;
    }
    for (const auto& e : pop.relationships) state.edges_by_src[e.src].push_back(e);
    for (const auto& agent : pop.agents) {
        auto it = state.edges_by_src.find(agent.id);
        if (it == state.edges_by_src.end()) continue;
        // phonebook: one entry per contact, first kind in (dst, kind) order
        std::string last_dst;
        std::vector<population::RelationshipEdge> sorted_edges = it->second;
        std::sort(sorted_edges.begin(), sorted_edges.end(),
                  [](const auto& a, const auto& b) {
                      return std::tie(a.dst, a.kind) < std::tie(b.dst, b.kind);
                  });
        for (const auto& e : sorted_edges) {
            if (e.kind == "stranger" || e.dst == last_dst) continue;
            state.phonebook[agent.id].push_back(PhoneContact{e.dst, e.kind});
            last_dst = e.dst;
        }
    }
    return state;
}

// ---- validation ----------------------------------------------------------------

namespace {

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

// Roles `target` can answer dialogue with at `loc`: their situational roles
// plus roles granted by their relationship to the initiator.
std::set<std::string> responder_roles_of(const SimState& state, const std::string& initiator,
                                         const std::string& target, const world::Location& loc) {
    auto roles = world::roles_at(state.profile_of(target), loc.id, loc.type, *state.assignment);
    for (const auto& kind : state.relationship_kinds(initiator, target))
        if (auto role = world::dialogue_role_for_relationship(kind)) roles.insert(*role);
    return roles;
}

std::optional<std::string> check_dialogue_targets(const SimState& state,
                                                  const std::string& agent_id,
                                                  const world::Location& loc,
                                                  const world::LocationActionSpec& spec,
                                                  const std::vector<std::string>& targets) {
    const auto& dlg = *spec.dialogue;
    if (targets.size() > 1 && !dlg.multi_target_allowed)
        return "action " + spec.id + " allows only one dialogue target";
    auto visible = state.visible_to(agent_id);
    bool any_role = contains(dlg.responder_roles, "any");
    for (const auto& t : targets) {
        if (t == agent_id) return "cannot pick yourself as a dialogue target";
        if (!std::binary_search(visible.begin(), visible.end(), t))
            return "'" + t + "' is not at this location";
        if (state.in_active_conversation(t))
            return state.profile_of(t).name + " is already in a conversation";
        if (!any_role) {
            auto roles = responder_roles_of(state, agent_id, t, loc);
            bool ok = false;
            for (const auto& r : dlg.responder_roles)
                if (roles.count(r)) {
                    ok = true;
                    break;
                }
            if (!ok)
                return state.profile_of(t).name + " does not hold a responder role for " + spec.id;
        }
    }
    return std::nullopt;
}

}  // namespace

std::optional<std::string> validate_action(const SimState& state, const std::string& agent_id,
                                           const Action& action) {
    state.profile_of(agent_id);  // throws on unknown agent
    if (std::holds_alternative<WaitAction>(action)) return std::nullopt;
    if (state.in_active_conversation(agent_id))
        return "you are in a conversation; finish or leave it first";
    const auto& loc = state.location_of(agent_id);

    if (const auto* move = std::get_if<MoveAction>(&action)) {
        if (!state.town->find(move->location))
            return "unknown location '" + move->location + "'";
        if (!state.town->adjacent(loc.id, move->location))
            return "'" + move->location + "' is not adjacent to " + loc.id;
        return std::nullopt;
    }
    if (const auto* talk = std::get_if<TalkAction>(&action)) {
        if (talk->targets.empty()) return "TALK needs at least one person to address";
        if (talk->utterance.empty()) return "TALK needs a non-empty utterance";
        auto visible = state.visible_to(agent_id);
        for (const auto& t : talk->targets) {
            if (t == agent_id) return "cannot talk to yourself";
            if (!std::binary_search(visible.begin(), visible.end(), t))
                return "'" + t + "' is not at this location";
            if (state.in_active_conversation(t))
                return state.profile_of(t).name + " is already in a conversation";
        }
        return std::nullopt;
    }
    if (const auto* la = std::get_if<LocationAction>(&action)) {
        const auto* spec = world::find_action(loc.type, la->action_id);
        if (!spec)
            return "no action '" + la->action_id + "' at a " + world::to_string(loc.type);
        auto roles = world::roles_at(state.profile_of(agent_id), loc.id, loc.type,
                                     *state.assignment);
        if (spec->role != "any" && !roles.count(spec->role))
            return "action " + spec->id + " requires the '" + spec->role + "' role here";
        for (const auto& p : spec->parameters) {
            if (!p.required) continue;
            auto it = la->parameters.find(p.name);
            if (it == la->parameters.end() || it->second.empty())
                return "missing required parameter '" + p.name + "' for " + spec->id;
        }
        if (!spec->triggers_dialogue && !la->targets.empty())
            return "action " + spec->id + " does not start a dialogue; targets must be empty";
        if (spec->triggers_dialogue && !la->targets.empty()) {
            if (la->utterance.empty())
                return "dialogue targets given for " + spec->id + " but no opening utterance";
            if (auto err = check_dialogue_targets(state, agent_id, loc, *spec, la->targets))
                return err;
        }
        return std::nullopt;
    }
    if (const auto* phone = std::get_if<PhoneAction>(&action)) {
        if (phone->kind != "call" && phone->kind != "message")
            return "phone action kind must be call or message";
        if (phone->content.empty()) return "phone action needs an utterance";
        if (phone->contact_id == agent_id) return "cannot phone yourself";
        auto it = state.phonebook.find(agent_id);
        bool known = false;
        if (it != state.phonebook.end())
            for (const auto& c : it->second)
                if (c.id == phone->contact_id) {
                    known = true;
                    break;
                }
        if (!known) return "'" + phone->contact_id + "' is not in your phone contacts";
        return std::nullopt;
    }
    return "unrecognized action";
}

std::vector<Action> legal_actions(const SimState& state, const std::string& agent_id) {
    std::vector<Action> out;
    out.push_back(WaitAction{});
    if (state.in_active_conversation(agent_id)) return out;
    const auto& loc = state.location_of(agent_id);

    auto neighbors = state.town->neighbors(loc.id);
    std::sort(neighbors.begin(), neighbors.end());
    for (const auto& n : neighbors) out.push_back(MoveAction{n});

    auto visible = state.visible_to(agent_id);
    for (const auto& v : visible)
        if (!state.in_active_conversation(v))
            out.push_back(TalkAction{{v}, "Hello, do you have a moment?", "greet"});

    auto roles = world::roles_at(state.profile_of(agent_id), loc.id, loc.type, *state.assignment);
    for (const auto& spec : world::actions_for(loc.type, roles)) {
        LocationAction base;
        base.action_id = spec.id;
        for (const auto& p : spec.parameters)
            if (p.required)
                base.parameters[p.name] =
                    p.type == "integer" ? "1" : p.type == "boolean" ? "true" : "something";
        out.push_back(base);
        if (spec.triggers_dialogue) {
            for (const auto& v : visible) {
                LocationAction with_target = base;
                with_target.targets = {v};
                with_target.utterance = "Hello, could you help me?";
                out.push_back(std::move(with_target));
            }
        }
    }

    auto pb = state.phonebook.find(agent_id);
    if (pb != state.phonebook.end())
        for (const auto& c : pb->second) {
            out.push_back(PhoneAction{"call", c.id, "Hi, just checking in."});
            out.push_back(PhoneAction{"message", c.id, "Hi, thinking of you."});
        }

    out.erase(std::remove_if(out.begin(), out.end(),
                             [&](const Action& a) {
                                 return validate_action(state, agent_id, a).has_value();
                             }),
              out.end());
    return out;
}

// ---- serialization ------------------------------------------------------------

json DialogueTurnRecord::to_json() const {
    return json{{"conversation_id", conversation_id},
                {"location_id", location_id},
                {"speaker", speaker},
                {"utterance", utterance}};
}

DialogueTurnRecord DialogueTurnRecord::from_json(const json& j) {
    DialogueTurnRecord r;
    r.conversation_id = j.value("conversation_id", "");
    r.location_id = j.value("location_id", "");
    r.speaker = j.value("speaker", "");
    r.utterance = j.value("utterance", "");
    return r;
}

json VisibleAgentRecord::to_json() const {
    return json{{"id", id}, {"nationality", nationality}};
}

VisibleAgentRecord VisibleAgentRecord::from_json(const json& j) {
    return VisibleAgentRecord{j.value("id", ""), j.value("nationality", "")};
}

json TrajectoryStep::to_json() const {
    json dlg = json::array();
    for (const auto& d : dialogue) dlg.push_back(d.to_json());
    json vis = json::array();
    for (const auto& v : visible) vis.push_back(v.to_json());
    return json{{"step", step},
                {"tau", tau},
                {"start_location", start_location},
                {"target_action", target_action},
                {"action_coerced", action_coerced},
                {"dialogue", dlg},
                {"target_location", target_location},
                {"target_location_type", target_location_type},
                {"visible", vis},
                {"norm_ids_in_force", norm_ids_in_force},
                {"theta", theta},
                {"target_in_conversation", target_in_conversation},
                {"partner_ids", partner_ids}};
}

TrajectoryStep TrajectoryStep::from_json(const json& j) {
    TrajectoryStep r;
    r.step = j.value("step", 0);
    r.tau = j.value("tau", 0);
    r.start_location = j.value("start_location", "");
    r.target_action = j.value("target_action", json::object());
    r.action_coerced = j.value("action_coerced", false);
    if (j.contains("dialogue"))
        for (const auto& d : j.at("dialogue")) r.dialogue.push_back(DialogueTurnRecord::from_json(d));
    r.target_location = j.value("target_location", "");
    r.target_location_type = j.value("target_location_type", "");
    if (j.contains("visible"))
        for (const auto& v : j.at("visible")) r.visible.push_back(VisibleAgentRecord::from_json(v));
    if (j.contains("norm_ids_in_force"))
        r.norm_ids_in_force = j.at("norm_ids_in_force").get<std::vector<std::string>>();
    if (j.contains("theta")) r.theta = j.at("theta").get<std::vector<int>>();
    r.target_in_conversation = j.value("target_in_conversation", false);
    if (j.contains("partner_ids"))
        r.partner_ids = j.at("partner_ids").get<std::vector<std::string>>();
    return r;
}

void Trajectory::save_jsonl(const std::string& path) const {
    std::string out;
    out += json{{"kind", "header"}, {"header", header}}.dump();
    out += '\n';
    for (const auto& s : steps) {
        out += json{{"kind", "step"}, {"step", s.to_json()}}.dump();
        out += '\n';
    }
    for (const auto& j : judgments) {
        out += json{{"kind", "judgment"}, {"judgment", j.to_json()}}.dump();
        out += '\n';
    }
    write_file(path, out);
}

Trajectory Trajectory::load_jsonl(const std::string& path) {
    Trajectory t;
    bool have_header = false;
    for (const auto& line : read_lines(path)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        std::string kind = j.value("kind", "");
        if (kind == "header") {
            t.header = j.at("header");
            have_header = true;
        } else if (kind == "step") {
            t.steps.push_back(TrajectoryStep::from_json(j.at("step")));
        } else if (kind == "judgment") {
            t.judgments.push_back(judgments::StepJudgment::from_json(j.at("judgment")));
        }
    }
    if (!have_header) throw EmptyTrajectory("no header line in " + path);
    return t;
}

// ---- context builders -----------------------------------------------------------

policy::PolicyContext make_step_context(const SimState& state, const std::string& agent_id,
                                        const RunConfig& config) {
    policy::PolicyContext ctx;
    const bool is_target = agent_id == state.target_id;
    ctx.kind = is_target ? policy::ContextKind::TargetStep : policy::ContextKind::SupportingStep;
    ctx.agent_id = agent_id;
    const auto& profile = state.profile_of(agent_id);
    ctx.profile = profile.to_json();
    ctx.current_time = format_clock(state.clock.tau);
    const auto& loc = state.location_of(agent_id);
    ctx.current_location = loc.id;
    ctx.current_location_type = world::to_string(loc.type);

    auto neighbors = state.town->neighbors(loc.id);
    std::sort(neighbors.begin(), neighbors.end());
    for (const auto& n : neighbors)
        ctx.adjacent.emplace_back(n, world::to_string(state.town->find(n)->type));

    for (const auto& vid : state.visible_to(agent_id)) {
        const auto& vp = state.profile_of(vid);
        policy::VisibleAgentView view;
        view.id = vid;
        view.name = vp.name;
        view.nationality = vp.nationality;
        view.roles = set_to_vector(world::roles_at(vp, loc.id, loc.type, *state.assignment));
        view.in_conversation = state.in_active_conversation(vid);
        view.relationship_kinds = state.relationship_kinds(agent_id, vid);
        ctx.visible.push_back(std::move(view));
    }

    auto roles = world::roles_at(profile, loc.id, loc.type, *state.assignment);
    ctx.agent_roles = set_to_vector(roles);
    ctx.location_actions = world::actions_for(loc.type, roles);

    auto pb = state.phonebook.find(agent_id);
    if (pb != state.phonebook.end())
        for (const auto& c : pb->second)
            ctx.phone_contacts.push_back(
                policy::PhoneContactView{c.id, state.profile_of(c.id).name, c.kind});

    auto mem = state.memories.find(agent_id);
    if (mem != state.memories.end() && !mem->second.empty()) {
        const auto& records = mem->second;
        size_t obs_from = records.size() > 3 ? records.size() - 3 : 0;
        for (size_t i = obs_from; i < records.size(); ++i) {
            if (!ctx.observation.empty()) ctx.observation += "; ";
            ctx.observation += records[i].text;
        }
        size_t sum_from = records.size() > 5 ? records.size() - 5 : 0;
        for (size_t i = sum_from; i < records.size(); ++i) {
            if (!ctx.memory_summary.empty()) ctx.memory_summary += '\n';
            ctx.memory_summary += "[" + format_clock(records[i].tau) + " @ " +
                                  records[i].location_id + "] " + records[i].text;
        }
    }

    ctx.plan = *state.plan;
    ctx.current_subtask_index = state.current_subtask_index();
    for (size_t i = 0; i < state.theta.size(); ++i)
        if (state.theta[i]) ctx.completed_subtask_ids.push_back(state.plan->subtasks[i].id);

    if (!is_target) {
        const auto& target = state.profile_of(state.target_id);
        ctx.target_profile = target.to_json();
        ctx.target_goal_text = state.plan->goal_text;
        for (const auto& n :
             world::norms_for_target(*state.town, *state.norms, loc.id, target.nationality))
            ctx.norms.push_back(policy::NormView{n.id, n.text});
        ctx.challenge_style = config.challenge_style;
    }
    return ctx;
}

policy::PolicyContext make_conversation_context(const SimState& state,
                                                const std::string& agent_id,
                                                const Conversation& conversation,
                                                const RunConfig& config) {
    auto ctx = make_step_context(state, agent_id, config);
    const bool is_target = agent_id == state.target_id;
    ctx.kind = is_target ? policy::ContextKind::TargetConversation
                         : policy::ContextKind::SupportingConversation;

    policy::ConversationView view;
    view.id = conversation.id;
    view.location_id = conversation.location_id;
    for (const auto& p : conversation.participants)
        view.participants.push_back(state.profile_of(p).name + " (" + p + ")");
    size_t from = conversation.turns.size() > static_cast<size_t>(kConversationTurnCap)
                      ? conversation.turns.size() - kConversationTurnCap
                      : 0;
    for (size_t i = from; i < conversation.turns.size(); ++i) {
        const auto& t = conversation.turns[i];
        view.recent_turns.emplace_back(state.profile_of(t.speaker).name + " (" + t.speaker + ")",
                                       t.utterance);
    }
    ctx.conversation = std::move(view);

    if (!is_target) {
        ctx.action_context =
            "conversation at " + conversation.location_id + " (" + ctx.current_location_type + ")";
        for (auto it = conversation.turns.rbegin(); it != conversation.turns.rend(); ++it) {
            if (it->speaker == state.target_id) {
                ctx.last_target_utterance = it->utterance;
                break;
            }
        }
        if (ctx.last_target_utterance.empty())
            for (auto it = conversation.turns.rbegin(); it != conversation.turns.rend(); ++it)
                if (it->speaker != agent_id) {
                    ctx.last_target_utterance = it->utterance;
                    break;
                }
    }
    return ctx;
}

// ---- stepping -----------------------------------------------------------------

namespace {

void add_memory(SimState& state, const std::string& agent, const std::string& text) {
    state.memories[agent].push_back(
        MemoryRecord{state.clock.step, state.clock.tau, state.agent_location.at(agent), text});
}

void deactivate(SimState& state, Conversation& conv) {
    conv.active = false;
    for (const auto& p : conv.participants) state.conversation_of.erase(p);
}

void start_conversation(SimState& state, const std::string& initiator,
                        const std::vector<std::string>& targets, const std::string& opener,
                        TrajectoryStep& rec) {
    Conversation conv;
    conv.id = "conv_" + zero_pad(static_cast<uint64_t>(state.conversation_counter++), 4);
    conv.location_id = state.agent_location.at(initiator);
    conv.participants.push_back(initiator);
    for (const auto& t : targets) conv.participants.push_back(t);
    conv.involves_target = contains(conv.participants, state.target_id);
    conv.turns.push_back(ConversationTurn{initiator, opener});
    rec.dialogue.push_back(
        DialogueTurnRecord{conv.id, conv.location_id, initiator, opener});
    int index = static_cast<int>(state.conversations.size());
    for (const auto& p : conv.participants) state.conversation_of[p] = index;

    std::string names;
    for (const auto& t : targets) {
        if (!names.empty()) names += ", ";
        names += state.profile_of(t).name;
    }
    for (const auto& o : state.agents_at(conv.location_id))
        if (!contains(conv.participants, o))
            add_memory(state, o,
                       state.profile_of(initiator).name + " started a conversation with " + names);
    state.conversations.push_back(std::move(conv));
}

void say_turn(SimState& state, Conversation& conv, const std::string& speaker,
              const std::string& utterance, TrajectoryStep& rec) {
    if (!conv.active) throw InactiveConversation("say in inactive conversation " + conv.id);
    if (!contains(conv.participants, speaker))
        throw NotParticipant(speaker + " is not in conversation " + conv.id);
    conv.turns.push_back(ConversationTurn{speaker, utterance});
    rec.dialogue.push_back(DialogueTurnRecord{conv.id, conv.location_id, speaker, utterance});
    if (static_cast<int>(conv.turns.size()) >= kConversationTurnCap) deactivate(state, conv);
}

void leave_turn(SimState& state, Conversation& conv, const std::string& agent) {
    if (!conv.active) throw InactiveConversation("leave of inactive conversation " + conv.id);
    auto it = std::find(conv.participants.begin(), conv.participants.end(), agent);
    if (it == conv.participants.end())
        throw NotParticipant(agent + " is not in conversation " + conv.id);
    conv.participants.erase(it);
    state.conversation_of.erase(agent);
    if (conv.participants.size() < 2) deactivate(state, conv);
}

void apply_step_action(SimState& state, const std::string& agent, const Action& action,
                       TrajectoryStep& rec) {
    if (const auto* move = std::get_if<MoveAction>(&action)) {
        state.agent_location[agent] = move->location;
        return;
    }
    if (const auto* talk = std::get_if<TalkAction>(&action)) {
        start_conversation(state, agent, talk->targets, talk->utterance, rec);
        return;
    }
    if (const auto* la = std::get_if<LocationAction>(&action)) {
        const std::string summary = action_summary(action);
        const std::string& here = state.agent_location.at(agent);
        for (const auto& o : state.agents_at(here)) {
            if (o == agent)
                add_memory(state, o, "You did: " + summary);
            else
                add_memory(state, o, state.profile_of(agent).name + ": " + summary);
        }
        if (!la->targets.empty()) start_conversation(state, agent, la->targets, la->utterance, rec);
        return;
    }
    if (const auto* phone = std::get_if<PhoneAction>(&action)) {
        const std::string verb = phone->kind == "call" ? "called" : "messaged";
        add_memory(state, agent,
                   "You " + verb + " " + state.profile_of(phone->contact_id).name + ": " +
                       phone->content);
        add_memory(state, phone->contact_id,
                   state.profile_of(agent).name + " " + verb + " you: " + phone->content);
        return;
    }
    // Wait: no effect.
}

void run_conversation_round(SimState& state, backend::Backend& target_backend,
                            backend::Backend& supporting_backend, const RunConfig& config,
                            TrajectoryStep& rec) {
    const Conversation* head = state.active_conversation(state.target_id);
    const size_t conv_index = static_cast<size_t>(state.conversation_of.at(state.target_id));
    std::vector<std::string> others;
    for (const auto& p : head->participants)
        if (p != state.target_id) others.push_back(p);
    std::sort(others.begin(), others.end());
    rec.partner_ids = others;

    std::vector<std::string> speakers;
    speakers.push_back(state.target_id);
    speakers.insert(speakers.end(), others.begin(), others.end());
    for (const auto& speaker : speakers) {
        Conversation& conv = state.conversations[conv_index];
        if (!conv.active) break;
        if (!contains(conv.participants, speaker)) continue;
        const bool is_target = speaker == state.target_id;
        auto ctx = make_conversation_context(state, speaker, conv, config);
        auto decision = policy::decide_conversation(
            is_target ? target_backend : supporting_backend, ctx,
            is_target ? config.target_options : config.supporting_options);
        if (is_target) {
            rec.action_coerced = decision.fell_back;
            rec.target_action = decision.move.leave
                                    ? json{{"type", "leave"}}
                                    : json{{"type", "say"},
                                           {"utterance", decision.move.utterance}};
        }
        if (decision.move.leave)
            leave_turn(state, conv, speaker);
        else
            say_turn(state, conv, speaker, decision.move.utterance, rec);
    }
}

}  // namespace

Trajectory run_day(SimState& state, backend::Backend& target_backend,
                   backend::Backend& supporting_backend, const RunConfig& config,
                   const StepJudge& judge) {
    Trajectory traj;
    traj.header = json{{"target_id", state.target_id},
                       {"seed", config.seed},
                       {"config_hash", config.config_hash},
                       {"template_version", policy::kTemplateVersion},
                       {"target_model", target_backend.model_id()},
                       {"supporting_model", supporting_backend.model_id()},
                       {"start_location", state.agent_location.at(state.target_id)},
                       {"plan", state.plan->to_json()}};
    while (true) {
        TrajectoryStep rec;
        rec.step = state.clock.step;
        rec.tau = state.clock.tau;
        rec.start_location = state.agent_location.at(state.target_id);

        if (state.in_active_conversation(state.target_id)) {
            run_conversation_round(state, target_backend, supporting_backend, config, rec);
        } else {
            auto ctx = make_step_context(state, state.target_id, config);
            auto decision =
                policy::decide_step(target_backend, ctx, state, config.target_options);
            rec.target_action = action_to_json(decision.action);
            rec.action_coerced = decision.fell_back;
            if (const auto* talk = std::get_if<TalkAction>(&decision.action))
                rec.partner_ids = talk->targets;
            else if (const auto* la = std::get_if<LocationAction>(&decision.action))
                rec.partner_ids = la->targets;
            apply_step_action(state, state.target_id, decision.action, rec);

            if (config.drive_colocated_only) {
                for (const auto& a : state.visible_to(state.target_id)) {
                    if (state.in_active_conversation(a)) continue;
                    auto sctx = make_step_context(state, a, config);
                    auto sdec = policy::decide_step(supporting_backend, sctx, state,
                                                    config.supporting_options);
                    apply_step_action(state, a, sdec.action, rec);
                }
            }
            for (auto& conv : state.conversations)
                if (conv.active && !conv.involves_target) deactivate(state, conv);
        }

        rec.target_location = state.agent_location.at(state.target_id);
        rec.target_location_type =
            world::to_string(state.town->find(rec.target_location)->type);
        for (const auto& id : state.visible_to(state.target_id))
            rec.visible.push_back(VisibleAgentRecord{id, state.profile_of(id).nationality});
        for (const auto& n : world::norms_for_target(
                 *state.town, *state.norms, rec.target_location,
                 state.profile_of(state.target_id).nationality))
            rec.norm_ids_in_force.push_back(n.id);
        rec.target_in_conversation = state.in_active_conversation(state.target_id);
        if (rec.partner_ids.empty())
            if (const auto* conv = state.active_conversation(state.target_id))
                for (const auto& p : conv->participants)
                    if (p != state.target_id) rec.partner_ids.push_back(p);

        if (judge) {
            auto jd = judge(state, rec);
            jd.step = rec.step;
            for (size_t i = 0; i < state.theta.size() && i < jd.g.size(); ++i)
                if (jd.g[i]) state.theta[i] = 1;
            jd.g.assign(state.theta.begin(), state.theta.end());
            int done = 0;
            for (int bit : state.theta) done += bit;
            jd.goal_progress =
                state.theta.empty() ? 0.0 : static_cast<double>(done) / state.theta.size();
            traj.judgments.push_back(std::move(jd));
        }
        rec.theta = state.theta;
        traj.steps.push_back(std::move(rec));

        bool all_done = !state.theta.empty() &&
                        std::all_of(state.theta.begin(), state.theta.end(),
                                    [](int bit) { return bit == 1; });
        if (all_done) break;
        if (static_cast<int>(traj.steps.size()) >= config.max_steps) break;
        if (!state.clock.advance(traj.steps.back().target_in_conversation)) break;
    }
    return traj;
}

// ---- audit --------------------------------------------------------------------

std::vector<std::string> audit_trajectory(const Trajectory& trajectory,
                                          const population::Population& pop,
                                          const world::TownGraph& town,
                                          const world::Assignment& assignment,
                                          const world::NormSet& norms,
                                          const goals::GoalPlan& plan) {
    std::vector<std::string> errors;
    auto fail = [&](size_t step, const std::string& what) {
        errors.push_back("step " + std::to_string(step) + ": " + what);
    };

    const std::string target_id = trajectory.header.value("target_id", "");
    const auto* target = pop.find(target_id);
    if (!target) {
        errors.push_back("header: unknown target '" + target_id + "'");
        return errors;
    }
    auto home_it = assignment.home.find(target_id);
    if (home_it == assignment.home.end()) {
        errors.push_back("header: target has no home assignment");
        return errors;
    }
    if (static_cast<int>(trajectory.steps.size()) > kMaxSteps)
        errors.push_back("trajectory exceeds the step cap");

    std::string prev_location = home_it->second;
    std::vector<std::string> prev_visible;
    for (const auto& [aid, home] : assignment.home)
        if (home == prev_location && aid != target_id) prev_visible.push_back(aid);
    std::sort(prev_visible.begin(), prev_visible.end());
    int expected_tau = goals::kDayStart;
    bool prev_in_conv = false;
    std::vector<int> prev_theta(plan.subtasks.size(), 0);

    for (size_t i = 0; i < trajectory.steps.size(); ++i) {
        const auto& rec = trajectory.steps[i];
        if (rec.step != static_cast<int>(i)) fail(i, "step index mismatch");
        if (rec.tau != expected_tau)
            fail(i, "clock mismatch: recorded " + std::to_string(rec.tau) + ", expected " +
                        std::to_string(expected_tau));
        if (rec.tau > goals::kDayEnd) fail(i, "step starts after the end of the day");
        if (rec.start_location != prev_location) fail(i, "start location discontinuity");
        const auto* start_loc = town.find(rec.start_location);
        if (!start_loc) {
            fail(i, "unknown start location '" + rec.start_location + "'");
            continue;
        }

        const std::string type = rec.target_action.value("type", "");
        const bool conv_mode = type == "say" || type == "leave";
        if (conv_mode != prev_in_conv)
            fail(i, conv_mode ? "conversation turn while not in a conversation"
                              : "step action while in a conversation");
        if (conv_mode) {
            if (rec.target_location != rec.start_location) fail(i, "moved while conversing");
        } else {
            Action action = WaitAction{};
            bool decoded = true;
            try {
                action = action_from_json(rec.target_action);
            } catch (const std::exception& e) {
                fail(i, std::string("undecodable action: ") + e.what());
                decoded = false;
            }
            if (decoded) {
                if (const auto* move = std::get_if<MoveAction>(&action)) {
                    if (!town.find(move->location))
                        fail(i, "move to unknown location '" + move->location + "'");
                    else if (!town.adjacent(rec.start_location, move->location))
                        fail(i, "move to non-adjacent location '" + move->location + "'");
                    if (rec.target_location != move->location)
                        fail(i, "recorded end location disagrees with the move");
                } else if (rec.target_location != rec.start_location) {
                    fail(i, "location changed without a move");
                }
                if (const auto* talk = std::get_if<TalkAction>(&action)) {
                    if (talk->targets.empty()) fail(i, "talk without targets");
                    if (talk->utterance.empty()) fail(i, "talk without an utterance");
                    for (const auto& t : talk->targets)
                        if (!std::binary_search(prev_visible.begin(), prev_visible.end(), t))
                            fail(i, "talk target '" + t + "' was not visible");
                }
                if (const auto* la = std::get_if<LocationAction>(&action)) {
                    const auto* spec = world::find_action(start_loc->type, la->action_id);
                    if (!spec) {
                        fail(i, "no action '" + la->action_id + "' at a " +
                                    world::to_string(start_loc->type));
                    } else {
                        auto roles = world::roles_at(*target, rec.start_location,
                                                     start_loc->type, assignment);
                        if (spec->role != "any" && !roles.count(spec->role))
                            fail(i, "actor lacks the '" + spec->role + "' role for " + spec->id);
                        for (const auto& p : spec->parameters) {
                            if (!p.required) continue;
                            auto it = la->parameters.find(p.name);
                            if (it == la->parameters.end() || it->second.empty())
                                fail(i, "missing required parameter '" + p.name + "' for " +
                                            spec->id);
                        }
                        if (!spec->triggers_dialogue && !la->targets.empty())
                            fail(i, "targets on non-dialogue action " + spec->id);
                        for (const auto& t : la->targets)
                            if (!std::binary_search(prev_visible.begin(), prev_visible.end(), t))
                                fail(i, "dialogue target '" + t + "' was not visible");
                    }
                }
                if (const auto* phone = std::get_if<PhoneAction>(&action)) {
                    bool known = false;
                    for (const auto& e : pop.relationships)
                        if (e.src == target_id && e.dst == phone->contact_id &&
                            e.kind != "stranger") {
                            known = true;
                            break;
                        }
                    if (!known)
                        fail(i, "phone contact '" + phone->contact_id + "' is not a contact");
                    if (phone->content.empty()) fail(i, "phone action without content");
                }
            }
        }

        if (rec.theta.size() != prev_theta.size()) {
            fail(i, "theta size mismatch");
        } else {
            for (size_t k = 0; k < rec.theta.size(); ++k)
                if (rec.theta[k] < prev_theta[k]) fail(i, "subtask completion regressed");
        }

        const auto* end_loc = town.find(rec.target_location);
        if (!end_loc) {
            fail(i, "unknown end location '" + rec.target_location + "'");
        } else {
            if (world::to_string(end_loc->type) != rec.target_location_type)
                fail(i, "location type mismatch");
            auto expected = world::norms_for_target(town, norms, rec.target_location,
                                                    target->nationality);
            std::vector<std::string> expected_ids;
            for (const auto& n : expected) expected_ids.push_back(n.id);
            std::sort(expected_ids.begin(), expected_ids.end());
            auto recorded_ids = rec.norm_ids_in_force;
            std::sort(recorded_ids.begin(), recorded_ids.end());
            if (expected_ids != recorded_ids) fail(i, "norms in force mismatch");
        }

        for (const auto& p : rec.partner_ids)
            if (p == target_id || !pop.find(p)) fail(i, "bad partner id '" + p + "'");
        for (const auto& v : rec.visible) {
            const auto* vp = pop.find(v.id);
            if (!vp)
                fail(i, "unknown visible agent '" + v.id + "'");
            else if (vp->nationality != v.nationality)
                fail(i, "visible agent nationality mismatch for " + v.id);
        }

        prev_location = rec.target_location;
        prev_visible.clear();
        for (const auto& v : rec.visible) prev_visible.push_back(v.id);
        std::sort(prev_visible.begin(), prev_visible.end());
        prev_in_conv = rec.target_in_conversation;
        if (rec.theta.size() == prev_theta.size()) prev_theta = rec.theta;
        expected_tau = rec.tau + (rec.target_in_conversation ? kConversationStepMinutes
                                                             : kStepMinutes);
    }
    return errors;
}

}  // namespace normtown::engine
