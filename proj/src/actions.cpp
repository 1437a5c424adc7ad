#include "normtown/actions.hpp"

namespace normtown::engine {

json action_to_json(const Action& a) {
    json j;
    if (const auto* m = std::get_if<MoveAction>(&a)) {
        j["type"] = "move";
        j["location"] = m->location;
    } else if (const auto* t = std::get_if<TalkAction>(&a)) {
        j["type"] = "talk";
        j["targets"] = t->targets;
        j["utterance"] = t->utterance;
        j["intent"] = t->intent;
    } else if (const auto* l = std::get_if<LocationAction>(&a)) {
        j["type"] = "location_action";
        j["action_id"] = l->action_id;
        j["parameters"] = json::object();
        for (const auto& [k, v] : l->parameters) j["parameters"][k] = v;
        j["targets"] = l->targets;
        j["utterance"] = l->utterance;
    } else if (const auto* p = std::get_if<PhoneAction>(&a)) {
        j["type"] = "phone";
        j["kind"] = p->kind;
        j["contact_id"] = p->contact_id;
        j["content"] = p->content;
    } else {
        j["type"] = "wait";
    }
    return j;
}

Action action_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "move") return MoveAction{j.at("location").get<std::string>()};
    if (type == "talk") {
        TalkAction t;
        for (const auto& x : j.at("targets")) t.targets.push_back(x.get<std::string>());
        t.utterance = j.value("utterance", "");
        t.intent = j.value("intent", "");
        return t;
    }
    if (type == "location_action") {
        LocationAction l;
        l.action_id = j.at("action_id").get<std::string>();
        if (j.contains("parameters"))
            for (auto it = j["parameters"].begin(); it != j["parameters"].end(); ++it)
                l.parameters[it.key()] = it.value().get<std::string>();
        if (j.contains("targets"))
            for (const auto& x : j["targets"]) l.targets.push_back(x.get<std::string>());
        l.utterance = j.value("utterance", "");
        return l;
    }
    if (type == "phone") {
        PhoneAction p;
        p.kind = j.at("kind").get<std::string>();
        p.contact_id = j.at("contact_id").get<std::string>();
        p.content = j.value("content", "");
        return p;
    }
    return WaitAction{};
}

std::string action_summary(const Action& a) {
    if (const auto* m = std::get_if<MoveAction>(&a)) return "moved to " + m->location;
    if (const auto* t = std::get_if<TalkAction>(&a)) {
        std::string who;
        for (const auto& id : t->targets) who += (who.empty() ? "" : ", ") + id;
        return "spoke to " + who + ": \"" + t->utterance + "\"";
    }
    if (const auto* l = std::get_if<LocationAction>(&a)) {
        std::string s = "did " + l->action_id;
        if (!l->utterance.empty()) s += " saying \"" + l->utterance + "\"";
        return s;
    }
    if (const auto* p = std::get_if<PhoneAction>(&a))
        return (p->kind == "call" ? "called " : "messaged ") + p->contact_id + ": \"" +
               p->content + "\"";
    return "waited";
}

}  // namespace normtown::engine
