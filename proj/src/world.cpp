#include "normtown/world.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "normtown/errors.hpp"

namespace normtown::world {

namespace {

struct TypeName {
    LocationType type;
    const char* canonical;
    const char* prefix;  // node id prefix
};

constexpr TypeName kTypeNames[] = {
    {LocationType::School, "School", "school"},
    {LocationType::Office, "Office", "office"},
    {LocationType::Apartment, "Apartment", "apartment"},
    {LocationType::Hospital, "Hospital", "hospital"},
    {LocationType::Park, "Park", "park"},
    {LocationType::ShoppingMall, "ShoppingMall", "mall"},
    {LocationType::Restaurant, "Restaurant", "restaurant"},
    {LocationType::Gym, "Gym", "gym"},
};

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

bool title_contains(const std::string& title, const char* token) {
    return lower(title).find(token) != std::string::npos;
}

}  // namespace

const std::string& to_string(LocationType t) {
    static const std::string names[] = {"School",       "Office",     "Apartment", "Hospital",
                                        "Park",         "ShoppingMall", "Restaurant", "Gym"};
    return names[static_cast<size_t>(t)];
}

std::optional<LocationType> location_type_from(const std::string& name) {
    std::string l = lower(name);
    l.erase(std::remove(l.begin(), l.end(), ' '), l.end());
    for (const auto& tn : kTypeNames)
        if (l == lower(tn.canonical)) return tn.type;
    if (l == "mall" || l == "shoppingmall") return LocationType::ShoppingMall;
    return std::nullopt;
}

const Location* TownGraph::find(const std::string& id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

Location* TownGraph::find(const std::string& id) {
    for (auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

std::vector<std::string> TownGraph::neighbors(const std::string& id) const {
    std::vector<std::string> out;
    for (const auto& [a, b] : edges) {
        if (a == id) out.push_back(b);
        if (b == id) out.push_back(a);
    }
    std::sort(out.begin(), out.end());
    return out;
}

bool TownGraph::adjacent(const std::string& a, const std::string& b) const {
    const auto& lo = std::min(a, b);
    const auto& hi = std::max(a, b);
    return std::binary_search(edges.begin(), edges.end(), std::make_pair(lo, hi));
}

bool TownGraph::connected() const {
    if (nodes.empty()) return false;
    std::set<std::string> seen{nodes[0].id};
    std::deque<std::string> frontier{nodes[0].id};
    while (!frontier.empty()) {
        std::string cur = frontier.front();
        frontier.pop_front();
        for (const auto& n : neighbors(cur))
            if (seen.insert(n).second) frontier.push_back(n);
    }
    return seen.size() == nodes.size();
}

std::vector<std::string> TownGraph::ids_of_type(LocationType t) const {
    std::vector<std::string> out;
    for (const auto& n : nodes)
        if (n.type == t) out.push_back(n.id);
    return out;
}

std::map<LocationType, int> default_location_counts() {
    return {
        {LocationType::School, 10},     {LocationType::Office, 20},
        {LocationType::Apartment, 22},  {LocationType::Hospital, 12},
        {LocationType::Park, 10},       {LocationType::ShoppingMall, 12},
        {LocationType::Restaurant, 20}, {LocationType::Gym, 4},
    };
}

TownGraph build_town(const std::map<LocationType, int>& counts, Rng& rng) {
    TownGraph town;
    town.seed = rng.seed();
    for (const auto& tn : kTypeNames) {
        auto it = counts.find(tn.type);
        int n = it == counts.end() ? 0 : it->second;
        for (int i = 0; i < n; ++i) {
            Location loc;
            loc.id = std::string(tn.prefix) + "_" + zero_pad(static_cast<uint64_t>(i), 2);
            loc.type = tn.type;
            town.nodes.push_back(std::move(loc));
        }
    }
    if (town.nodes.empty()) throw EmptyTown("build_town: all location counts are zero");

    std::set<std::pair<std::string, std::string>> edge_set;
    auto canonical = [](const std::string& a, const std::string& b) {
        return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    };

    // Random spanning tree: attach each node (in shuffled order) to a random
    // earlier node, then sprinkle extra edges for alternative routes.
    std::vector<size_t> order(town.nodes.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (size_t i = 1; i < order.size(); ++i) {
        size_t j = static_cast<size_t>(rng.next_below(i));
        edge_set.insert(canonical(town.nodes[order[i]].id, town.nodes[order[j]].id));
    }

    const size_t extra = static_cast<size_t>(std::ceil(0.5 * double(town.nodes.size())));
    const size_t max_edges = town.nodes.size() * (town.nodes.size() - 1) / 2;
    size_t attempts = 0;
    const size_t attempt_budget = extra * 200 + 100;
    size_t added = 0;
    while (added < extra && edge_set.size() < max_edges && attempts < attempt_budget) {
        ++attempts;
        size_t a = rng.next_below(town.nodes.size());
        size_t b = rng.next_below(town.nodes.size());
        if (a == b) continue;
        if (edge_set.insert(canonical(town.nodes[a].id, town.nodes[b].id)).second) ++added;
    }

    town.edges.assign(edge_set.begin(), edge_set.end());
    return town;
}

json TownGraph::to_json() const {
    json j;
    j["seed"] = seed;
    j["nodes"] = json::array();
    for (const auto& n : nodes) {
        json nj;
        nj["id"] = n.id;
        nj["type"] = to_string(n.type);
        nj["norm_ids"] = n.norm_ids;
        nj["initial_agent_ids"] = n.initial_agent_ids;
        j["nodes"].push_back(std::move(nj));
    }
    j["edges"] = json::array();
    for (const auto& [a, b] : edges) j["edges"].push_back(json::array({a, b}));
    return j;
}

TownGraph TownGraph::from_json(const json& j) {
    TownGraph t;
    t.seed = j.value("seed", 0ULL);
    for (const auto& nj : j.at("nodes")) {
        Location loc;
        loc.id = nj.at("id").get<std::string>();
        auto type = location_type_from(nj.at("type").get<std::string>());
        if (!type) throw UnknownLocation("town: unknown location type " + nj["type"].dump());
        loc.type = *type;
        if (nj.contains("norm_ids"))
            for (const auto& id : nj["norm_ids"]) loc.norm_ids.push_back(id.get<std::string>());
        if (nj.contains("initial_agent_ids"))
            for (const auto& id : nj["initial_agent_ids"])
                loc.initial_agent_ids.push_back(id.get<std::string>());
        t.nodes.push_back(std::move(loc));
    }
    for (const auto& ej : j.at("edges"))
        t.edges.emplace_back(ej.at(0).get<std::string>(), ej.at(1).get<std::string>());
    std::sort(t.edges.begin(), t.edges.end());
    return t;
}

const NormRecord* NormSet::find(const std::string& id) const {
    for (const auto& r : records)
        if (r.id == id) return &r;
    return nullptr;
}

NormSet load_norms(const std::vector<std::string>& lines,
                   const std::set<std::string>& valid_nationalities) {
    NormSet out;
    std::set<std::string> ids;
    size_t lineno = 0;
    for (const auto& line : lines) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw MalformedNorms("norms line " + std::to_string(lineno) + ": " + e.what());
        }
        NormRecord r;
        if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty())
            throw MalformedNorms("norms line " + std::to_string(lineno) + ": missing id");
        r.id = j["id"].get<std::string>();
        if (!ids.insert(r.id).second)
            throw DuplicateNormId("norms line " + std::to_string(lineno) + ": duplicate id " +
                                  r.id);
        if (!j.contains("text") || !j["text"].is_string() || j["text"].get<std::string>().empty())
            throw MalformedNorms("norms line " + std::to_string(lineno) + ": missing text");
        r.text = j["text"].get<std::string>();
        if (!j.contains("nationality") || !j["nationality"].is_string())
            throw MalformedNorms("norms line " + std::to_string(lineno) + ": missing nationality");
        r.nationality = j["nationality"].get<std::string>();
        if (r.nationality.empty() ||
            (!valid_nationalities.empty() && !valid_nationalities.count(r.nationality)))
            throw MalformedNorms("norms line " + std::to_string(lineno) +
                                 ": unknown nationality '" + r.nationality + "'");
        if (!j.contains("location_types") || !j["location_types"].is_array() ||
            j["location_types"].empty())
            throw MalformedNorms("norms line " + std::to_string(lineno) +
                                 ": location_types must be a non-empty array");
        for (const auto& lt : j["location_types"]) {
            auto type = location_type_from(lt.get<std::string>());
            if (!type)
                throw MalformedNorms("norms line " + std::to_string(lineno) +
                                     ": unknown location type " + lt.dump());
            r.location_types.push_back(*type);
        }
        out.records.push_back(std::move(r));
    }
    return out;
}

NormSet load_norms_file(const std::string& path,
                        const std::set<std::string>& valid_nationalities) {
    return load_norms(read_lines(path), valid_nationalities);
}

void attach_norms(TownGraph& town, const NormSet& norms, Rng& rng,
                  std::optional<size_t> per_location_cap) {
    for (auto& node : town.nodes) {
        node.norm_ids.clear();
        for (const auto& r : norms.records)
            if (std::find(r.location_types.begin(), r.location_types.end(), node.type) !=
                r.location_types.end())
                node.norm_ids.push_back(r.id);
        if (per_location_cap && node.norm_ids.size() > *per_location_cap) {
            // Sample `cap` indices without replacement, keep file order.
            std::vector<size_t> idx(node.norm_ids.size());
            for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            for (size_t i = 0; i < *per_location_cap; ++i) {
                size_t j = i + static_cast<size_t>(rng.next_below(idx.size() - i));
                std::swap(idx[i], idx[j]);
            }
            idx.resize(*per_location_cap);
            std::sort(idx.begin(), idx.end());
            std::vector<std::string> kept;
            for (size_t i : idx) kept.push_back(node.norm_ids[i]);
            node.norm_ids = std::move(kept);
        }
    }
}

std::vector<NormRecord> norms_for_target(const TownGraph& town, const NormSet& norms,
                                         const std::string& location_id,
                                         const std::string& nationality) {
    const Location* loc = town.find(location_id);
    if (!loc) throw UnknownLocation("norms_for_target: no location " + location_id);
    std::vector<NormRecord> out;
    for (const auto& id : loc->norm_ids) {
        const NormRecord* r = norms.find(id);
        if (r && r->nationality == nationality) out.push_back(*r);
    }
    return out;
}

json LocationActionSpec::to_json() const {
    json j;
    j["id"] = id;
    j["location_type"] = to_string(location_type);
    j["role"] = role;
    j["parameters"] = json::array();
    for (const auto& p : parameters)
        j["parameters"].push_back(json{{"name", p.name}, {"type", p.type}, {"required", p.required}});
    j["triggers_dialogue"] = triggers_dialogue;
    if (dialogue) {
        j["dialogue"] = json{{"initiator_role", dialogue->initiator_role},
                             {"responder_roles", dialogue->responder_roles},
                             {"multi_target_allowed", dialogue->multi_target_allowed}};
    }
    return j;
}

const std::vector<LocationActionSpec>& action_catalog() {
    using LT = LocationType;
    auto spec = [](const char* id, LT lt, const char* role, std::vector<ParamSpec> params,
                   std::optional<DialogueSpec> dlg) {
        LocationActionSpec s;
        s.id = id;
        s.location_type = lt;
        s.role = role;
        s.parameters = std::move(params);
        s.triggers_dialogue = dlg.has_value();
        s.dialogue = std::move(dlg);
        return s;
    };
    static const std::vector<LocationActionSpec> catalog = {
        // Apartment
        spec("REST_AT_HOME", LT::Apartment, "any", {{"activity", "string", false}}, std::nullopt),
        spec("HOST_VISITOR", LT::Apartment, "any",
             {{"guest_agent_id", "string", true}, {"visit_purpose", "string", false}},
             DialogueSpec{"resident", {"friend", "family_member", "neighbor"}, true}),
        // School
        spec("ATTEND_CLASS", LT::School, "student",
             {{"subject", "string", true}, {"classroom_id", "string", false}},
             DialogueSpec{"student", {"teacher", "student"}, true}),
        spec("TEACH_CLASS", LT::School, "teacher",
             {{"subject", "string", true}, {"lesson_topic", "string", false}},
             DialogueSpec{"teacher", {"student"}, true}),
        // Hospital
        spec("CONSULT_PATIENT", LT::Hospital, "doctor", {{"patient_id", "string", true}},
             DialogueSpec{"doctor", {"patient"}, false}),
        spec("TAKE_VITALS", LT::Hospital, "nurse", {{"patient_id", "string", true}},
             DialogueSpec{"nurse", {"patient"}, false}),
        spec("CHECK_IN_RECEPTION", LT::Hospital, "patient",
             {{"reason_for_visit", "string", true}},
             DialogueSpec{"patient", {"receptionist"}, false}),
        spec("SEE_DOCTOR", LT::Hospital, "patient", {{"doctor_specialty", "string", false}},
             DialogueSpec{"patient", {"doctor"}, false}),
        // Restaurant
        spec("ENTER_RESTAURANT", LT::Restaurant, "customer", {},
             DialogueSpec{"customer", {"waiter"}, false}),
        spec("ORDER_FOOD", LT::Restaurant, "customer",
             {{"menu_item", "string", true}, {"special_request", "string", false}},
             DialogueSpec{"customer", {"waiter"}, false}),
        spec("EAT_MEAL", LT::Restaurant, "customer", {}, std::nullopt),
        spec("PAY_BILL", LT::Restaurant, "customer", {{"payment_method", "string", false}},
             DialogueSpec{"customer", {"waiter", "cashier"}, false}),
        spec("SEAT_CUSTOMER", LT::Restaurant, "waiter", {{"customer_id", "string", true}},
             DialogueSpec{"waiter", {"customer"}, false}),
        spec("TAKE_ORDER", LT::Restaurant, "waiter", {{"customer_id", "string", true}},
             DialogueSpec{"waiter", {"customer"}, false}),
        spec("SERVE_FOOD", LT::Restaurant, "waiter", {{"customer_id", "string", true}},
             std::nullopt),
        spec("PROVIDE_BILL", LT::Restaurant, "waiter", {{"customer_id", "string", true}},
             DialogueSpec{"waiter", {"customer"}, false}),
        spec("PREPARE_MEAL", LT::Restaurant, "chef", {{"order_id", "string", true}}, std::nullopt),
        // Park
        spec("TAKE_WALK", LT::Park, "any", {{"duration_minutes", "integer", false}}, std::nullopt),
        spec("SIT_ON_BENCH", LT::Park, "any", {{"quiet", "boolean", false}},
             DialogueSpec{"any", {"any"}, true}),
        // Office
        spec("WORK_AT_DESK", LT::Office, "office_worker", {{"task_description", "string", false}},
             std::nullopt),
        spec("ATTEND_MEETING", LT::Office, "office_worker", {{"meeting_topic", "string", true}},
             DialogueSpec{"office_worker", {"office_worker", "manager"}, true}),
        spec("GREET_VISITOR", LT::Office, "receptionist", {{"visitor_id", "string", true}},
             DialogueSpec{"receptionist", {"visitor"}, false}),
        // Gym
        spec("CHECK_IN_GYM", LT::Gym, "gym_member", {},
             DialogueSpec{"gym_member", {"receptionist"}, false}),
        spec("USE_EQUIPMENT", LT::Gym, "gym_member", {{"equipment_type", "string", false}},
             std::nullopt),
        spec("TRAIN_CLIENT", LT::Gym, "trainer", {{"client_id", "string", true}},
             DialogueSpec{"trainer", {"gym_member"}, false}),
        // Shopping mall
        spec("ENTER_SHOP", LT::ShoppingMall, "shopper", {{"shop_name", "string", true}},
             DialogueSpec{"shopper", {"shop_staff"}, false}),
        spec("BUY_ITEM", LT::ShoppingMall, "shopper", {{"item_name", "string", true}},
             DialogueSpec{"shopper", {"shop_staff"}, false}),
        spec("ASSIST_CUSTOMER", LT::ShoppingMall, "shop_staff", {{"customer_id", "string", true}},
             DialogueSpec{"shop_staff", {"shopper"}, false}),
    };
    return catalog;
}

std::vector<LocationActionSpec> actions_for(LocationType t, const std::set<std::string>& roles) {
    std::vector<LocationActionSpec> out;
    for (const auto& a : action_catalog())
        if (a.location_type == t && (a.role == "any" || roles.count(a.role))) out.push_back(a);
    return out;
}

const LocationActionSpec* find_action(LocationType t, const std::string& action_id) {
    for (const auto& a : action_catalog())
        if (a.location_type == t && a.id == action_id) return &a;
    return nullptr;
}

json Assignment::to_json() const {
    json j;
    j["home"] = json::object();
    for (const auto& [agent, loc] : home) j["home"][agent] = loc;
    j["job"] = json::object();
    for (const auto& [agent, loc] : job) j["job"][agent] = loc;
    return j;
}

Assignment Assignment::from_json(const json& j) {
    Assignment a;
    for (auto it = j.at("home").begin(); it != j.at("home").end(); ++it)
        a.home[it.key()] = it.value().get<std::string>();
    if (j.contains("job"))
        for (auto it = j["job"].begin(); it != j["job"].end(); ++it)
            a.job[it.key()] = it.value().get<std::string>();
    return a;
}

Assignment assign_homes_jobs(const population::Population& pop, TownGraph& town, Rng& rng) {
    Assignment out;
    std::vector<std::string> apartments = town.ids_of_type(LocationType::Apartment);
    if (!pop.agents.empty() && apartments.empty())
        throw NoApartment("assign_homes_jobs: town has no apartments");

    std::map<std::string, std::string> household_home;
    for (const auto& h : pop.households)
        household_home[h.id] = apartments[rng.next_below(apartments.size())];

    for (const auto& agent : pop.agents) {
        auto it = household_home.find(agent.household_id);
        out.home[agent.id] = it != household_home.end()
                                 ? it->second
                                 : apartments[rng.next_below(apartments.size())];
    }
    for (const auto& agent : pop.agents) {
        if (!agent.job_location_type) continue;
        auto type = location_type_from(*agent.job_location_type);
        if (!type)
            throw NoLocationOfType("assign_homes_jobs: unknown job location type '" +
                                   *agent.job_location_type + "' for " + agent.id);
        std::vector<std::string> options = town.ids_of_type(*type);
        if (options.empty())
            throw NoLocationOfType("assign_homes_jobs: no locations of type " +
                                   *agent.job_location_type + " for " + agent.id);
        out.job[agent.id] = options[rng.next_below(options.size())];
    }

    for (auto& node : town.nodes) node.initial_agent_ids.clear();
    for (const auto& [agent, home] : out.home) town.find(home)->initial_agent_ids.push_back(agent);
    for (auto& node : town.nodes)
        std::sort(node.initial_agent_ids.begin(), node.initial_agent_ids.end());
    return out;
}

namespace {

std::set<std::string> employment_roles(const population::AgentProfile& agent, LocationType t) {
    std::set<std::string> roles;
    if (agent.occupation == population::kStudentOccupation) {
        roles.insert("student");
        return roles;
    }
    const std::string title = agent.job_title.value_or("");
    switch (t) {
        case LocationType::School:
            roles.insert(title_contains(title, "teacher") ? "teacher" : "school_staff");
            break;
        case LocationType::Hospital:
            if (title_contains(title, "nurse"))
                roles.insert("nurse");
            else if (title_contains(title, "receptionist") || title_contains(title, "clerk"))
                roles.insert("receptionist");
            else if (title_contains(title, "cleaner"))
                roles.insert("hospital_staff");
            else
                roles.insert("doctor");
            break;
        case LocationType::Office:
            roles.insert("office_worker");
            if (title_contains(title, "administrator") || title_contains(title, "support"))
                roles.insert("receptionist");
            break;
        case LocationType::Restaurant:
            if (title_contains(title, "chef") || title_contains(title, "cook") ||
                title_contains(title, "dishwasher"))
                roles.insert("chef");
            else
                roles.insert("waiter");
            break;
        case LocationType::Gym:
            if (title_contains(title, "trainer") || title_contains(title, "instructor") ||
                title_contains(title, "physiologist") || title_contains(title, "coach"))
                roles.insert("trainer");
            else if (title_contains(title, "receptionist") || title_contains(title, "manager"))
                roles.insert("receptionist");
            else
                roles.insert("gym_staff");
            break;
        case LocationType::ShoppingMall:
            if (title_contains(title, "security"))
                roles.insert("security");
            else if (title_contains(title, "cleaner"))
                roles.insert("mall_staff");
            else
                roles.insert("shop_staff");
            if (title_contains(title, "cashier")) roles.insert("cashier");
            break;
        default:
            break;
    }
    if (agent.job_title && population::title_matches_manager(*agent.job_title))
        roles.insert("manager");
    return roles;
}

}  // namespace

std::set<std::string> roles_at(const population::AgentProfile& agent,
                               const std::string& location_id, LocationType location_type,
                               const Assignment& assignment) {
    std::set<std::string> roles;
    auto home = assignment.home.find(agent.id);
    if (home != assignment.home.end() && home->second == location_id) roles.insert("resident");

    auto job = assignment.job.find(agent.id);
    const bool at_job = job != assignment.job.end() && job->second == location_id;
    if (at_job) {
        auto work = employment_roles(agent, location_type);
        roles.insert(work.begin(), work.end());
        return roles;
    }

    // Visiting: the role you hold by walking in the door.
    switch (location_type) {
        case LocationType::Restaurant: roles.insert("customer"); break;
        case LocationType::ShoppingMall: roles.insert("shopper"); break;
        case LocationType::Hospital: roles.insert("patient"); break;
        case LocationType::Gym: roles.insert("gym_member"); break;
        case LocationType::School: roles.insert("student"); break;
        case LocationType::Office: roles.insert("visitor"); break;
        case LocationType::Apartment:
            if (!roles.count("resident")) roles.insert("visitor");
            break;
        case LocationType::Park: break;
    }
    return roles;
}

std::optional<std::string> dialogue_role_for_relationship(const std::string& kind) {
    if (kind == "friend") return "friend";
    if (kind == "neighbour" || kind == "neighbor") return "neighbor";
    static const std::set<std::string> family = {"mother", "father", "parent",  "son",
                                                 "daughter", "child", "sibling", "spouse",
                                                 "partner",  "relative"};
    if (family.count(kind)) return "family_member";
    return std::nullopt;
}

}  // namespace normtown::world
