#include "normtown/goals.hpp"

#include <algorithm>
#include <set>

#include "normtown/errors.hpp"
#include "normtown/policy.hpp"
#include "normtown/templates.hpp"

namespace normtown::goals {

namespace {

using world::LocationType;

struct SlotText {
    const char* title;
    const char* desc;
};

SlotText slot_text(LocationType t, bool first, bool last, bool second_work_block) {
    if (t == LocationType::Apartment && first)
        return {"Morning routine", "Ease into the day at home: breakfast and getting ready."};
    if (t == LocationType::Apartment && last)
        return {"Evening at home", "Return home, have dinner and wind down for the night."};
    switch (t) {
        case LocationType::School:
            return {"Attend classes", "Spend the school day in class and keep up with the work."};
        case LocationType::Office:
        case LocationType::Hospital:
        case LocationType::Restaurant:
        case LocationType::Gym:
        case LocationType::ShoppingMall:
        case LocationType::Park:
        case LocationType::Apartment:
            break;
    }
    switch (t) {
        case LocationType::Restaurant: return {"Meal out", "Sit down for a proper meal and take a break."};
        case LocationType::Park: return {"Time in the park", "Get fresh air and stretch your legs outdoors."};
        case LocationType::Gym: return {"Exercise session", "Fit in a workout and stay active."};
        case LocationType::ShoppingMall: return {"Run errands", "Browse the shops and pick up what you need."};
        case LocationType::Hospital: return {"Health check-up", "Attend a routine appointment and follow up on health matters."};
        case LocationType::Apartment: return {"Time at home", "Handle chores and take a breather at home."};
        default:
            break;
    }
    if (second_work_block) return {"Afternoon work block", "Push through the afternoon tasks at your workplace."};
    return {"Work shift", "Put in focused hours at your workplace."};
}

bool is_work_type(LocationType t, const std::optional<LocationType>& job) {
    return job && t == *job && t != LocationType::Apartment;
}

}  // namespace

json Subtask::to_json() const {
    json j;
    j["id"] = id;
    j["title"] = title;
    j["desc"] = desc;
    j["location_type"] = world::to_string(location_type);
    j["window"] = json::array({window_start, window_end});
    return j;
}

Subtask Subtask::from_json(const json& j) {
    Subtask s;
    s.id = j.at("id").get<std::string>();
    s.title = j.value("title", "");
    s.desc = j.value("desc", "");
    auto t = world::location_type_from(j.at("location_type").get<std::string>());
    if (!t) throw MalformedTable("subtask: unknown location type " + j["location_type"].dump());
    s.location_type = *t;
    s.window_start = j.at("window").at(0).get<int>();
    s.window_end = j.at("window").at(1).get<int>();
    return s;
}

json GoalPlan::to_json() const {
    json j;
    j["target_id"] = target_id;
    j["goal_text"] = goal_text;
    j["templated_fallback"] = templated_fallback;
    j["subtasks"] = json::array();
    for (const auto& s : subtasks) j["subtasks"].push_back(s.to_json());
    return j;
}

GoalPlan GoalPlan::from_json(const json& j) {
    GoalPlan p;
    p.target_id = j.value("target_id", "");
    p.goal_text = j.at("goal_text").get<std::string>();
    p.templated_fallback = j.value("templated_fallback", false);
    for (const auto& sj : j.at("subtasks")) p.subtasks.push_back(Subtask::from_json(sj));
    return p;
}

std::vector<PlanIssue> validate_plan(const GoalPlan& plan, const world::TownGraph& town) {
    std::vector<PlanIssue> issues;
    const int k = static_cast<int>(plan.subtasks.size());
    if (k < kMinSubtasks || k > kMaxSubtasks)
        issues.push_back({"subtask count " + std::to_string(k) + " outside [4, 6]"});
    std::set<std::string> ids;
    for (const auto& s : plan.subtasks) {
        if (s.id.empty()) issues.push_back({"subtask with empty id"});
        if (!ids.insert(s.id).second) issues.push_back({"duplicate subtask id " + s.id});
        if (s.window_start >= s.window_end)
            issues.push_back({"subtask " + s.id + ": empty window"});
        if (town.ids_of_type(s.location_type).empty())
            issues.push_back({"subtask " + s.id + ": no " + world::to_string(s.location_type) +
                              " in the town"});
    }
    if (!plan.subtasks.empty()) {
        if (plan.subtasks.front().window_start != kDayStart)
            issues.push_back({"first window does not start at 07:00"});
        if (plan.subtasks.back().window_end != kDayEnd)
            issues.push_back({"last window does not end at 22:00"});
        for (size_t i = 1; i < plan.subtasks.size(); ++i)
            if (plan.subtasks[i].window_start != plan.subtasks[i - 1].window_end)
                issues.push_back({"window gap/overlap before subtask " + plan.subtasks[i].id});
    }
    return issues;
}

GoalPlan templated_goal_plan(const population::AgentProfile& profile,
                             const world::TownGraph& town, Rng& rng) {
    std::set<LocationType> available;
    for (const auto& t : world::kAllLocationTypes)
        if (!town.ids_of_type(t).empty()) available.insert(t);
    if (available.empty()) throw EmptyTown("templated_goal_plan: town has no locations");

    auto pick_available = [&](std::initializer_list<LocationType> preferences) {
        for (auto t : preferences)
            if (available.count(t)) return t;
        return *available.begin();
    };
    const LocationType home =
        pick_available({LocationType::Apartment, LocationType::Park});

    std::optional<LocationType> job;
    if (profile.job_location_type) {
        auto t = world::location_type_from(*profile.job_location_type);
        if (t && available.count(*t)) job = *t;
    }
    const bool student = profile.occupation == population::kStudentOccupation && job &&
                         *job == LocationType::School;
    const bool worker = !student && job.has_value();

    // Leisure types, randomly ordered so plans differ across agents.
    std::vector<LocationType> leisure_pool;
    for (auto t : {LocationType::Park, LocationType::ShoppingMall, LocationType::Gym})
        if (available.count(t)) leisure_pool.push_back(t);
    rng.shuffle(leisure_pool);
    size_t leisure_next = 0;
    auto next_leisure = [&]() {
        if (leisure_pool.empty())
            return pick_available({LocationType::Park, LocationType::Restaurant});
        LocationType t = leisure_pool[leisure_next % leisure_pool.size()];
        ++leisure_next;
        return t;
    };
    const LocationType meal = pick_available({LocationType::Restaurant, LocationType::Park});

    const int k = static_cast<int>(rng.uniform_int(kMinSubtasks, kMaxSubtasks));

    std::vector<LocationType> slots;
    std::vector<int> cuts;  // k + 1 boundaries, base skeleton before jitter
    if (student) {
        if (k == 4) {
            slots = {home, LocationType::School, next_leisure(), home};
            cuts = {420, 510, 930, 1140, 1320};
        } else if (k == 5) {
            slots = {home, LocationType::School, next_leisure(), meal, home};
            cuts = {420, 510, 900, 1080, 1200, 1320};
        } else {
            slots = {home, LocationType::School, next_leisure(), meal, next_leisure(), home};
            cuts = {420, 510, 900, 1020, 1140, 1230, 1320};
        }
    } else if (worker) {
        if (k == 4) {
            slots = {home, *job, meal, home};
            cuts = {420, 540, 1020, 1140, 1320};
        } else if (k == 5) {
            slots = {home, *job, meal, *job, home};
            cuts = {420, 510, 750, 840, 1140, 1320};
        } else {
            slots = {home, *job, meal, *job, next_leisure(), home};
            cuts = {420, 510, 750, 840, 1080, 1200, 1320};
        }
    } else {
        const LocationType a = next_leisure();
        const LocationType b = next_leisure();
        if (k == 4) {
            slots = {home, a, b, home};
            cuts = {420, 570, 840, 1110, 1320};
        } else if (k == 5) {
            slots = {home, a, meal, b, home};
            cuts = {420, 570, 780, 900, 1140, 1320};
        } else {
            const LocationType errand =
                pick_available({LocationType::Hospital, LocationType::ShoppingMall,
                                LocationType::Park});
            slots = {home, a, meal, errand, b, home};
            cuts = {420, 540, 750, 870, 1020, 1170, 1320};
        }
    }

    // Jitter interior boundaries on the half-hour grid, keeping every window
    // at least 30 minutes and a student's school block inside 08:00-16:00.
    for (size_t i = 1; i + 1 < cuts.size(); ++i) {
        int delta = static_cast<int>(rng.uniform_int(-1, 1)) * 30;
        int lo = cuts[i - 1] + 30;
        int hi = cuts[i + 1] - 30;
        if (student) {
            if (slots[i] == LocationType::School) lo = std::max(lo, 480);      // school start
            if (slots[i - 1] == LocationType::School) hi = std::min(hi, 960);  // school end
        }
        cuts[i] = std::clamp(cuts[i] + delta, lo, hi);
    }

    GoalPlan plan;
    plan.target_id = profile.id;
    if (student)
        plan.goal_text = "Get through a full school day, stay sociable, and be home by night.";
    else if (worker)
        plan.goal_text = "Balance a productive workday with meals out and time to recharge.";
    else
        plan.goal_text = "Enjoy an unhurried day around town while keeping to your routines.";

    bool seen_work = false;
    for (int i = 0; i < k; ++i) {
        Subtask s;
        s.id = "t" + std::to_string(i + 1);
        const bool first = i == 0;
        const bool last = i == k - 1;
        const bool work_block = is_work_type(slots[i], job) && !student;
        SlotText text = slot_text(slots[i], first, last, work_block && seen_work);
        if (work_block) seen_work = true;
        s.title = text.title;
        s.desc = text.desc;
        s.location_type = slots[i];
        s.window_start = cuts[i];
        s.window_end = cuts[i + 1];
        plan.subtasks.push_back(std::move(s));
    }
    return plan;
}

GoalPlan generate_goal_plan(const population::AgentProfile& profile, const world::TownGraph& town,
                            backend::Backend& backend, Rng& rng, int attempts) {
    std::vector<std::string> type_names;
    for (auto t : world::kAllLocationTypes)
        if (!town.ids_of_type(t).empty()) type_names.push_back(world::to_string(t));
    std::string types_joined;
    for (size_t i = 0; i < type_names.size(); ++i) {
        if (i) types_joined += ", ";
        types_joined += type_names[i];
    }
    const auto prompt = policy::render_template(
        policy::get_template(policy::TemplateId::GoalGenerator),
        {{"profile", profile.to_json().dump()},
         {"location_types", types_joined},
         {"min_subtasks", std::to_string(kMinSubtasks)},
         {"max_subtasks", std::to_string(kMaxSubtasks)}});

    for (int attempt = 0; attempt < attempts; ++attempt) {
        backend::CompletionOptions options;
        options.sample_index = attempt;
        auto completion = backend.complete(prompt, options, nullptr);
        auto j = policy::extract_json(completion.text);
        if (!j || !j->is_object() || !j->contains("subtasks") || !(*j)["subtasks"].is_array())
            continue;
        GoalPlan plan;
        plan.target_id = profile.id;
        plan.goal_text = j->value("goal_text", "");
        bool malformed = plan.goal_text.empty();
        for (const auto& st : (*j)["subtasks"]) {
            try {
                plan.subtasks.push_back(Subtask::from_json(st));
            } catch (const std::exception&) {
                malformed = true;
                break;
            }
        }
        if (malformed || !validate_plan(plan, town).empty()) continue;
        if (profile.job_location_type) {
            auto job = world::location_type_from(*profile.job_location_type);
            bool covered = !job.has_value();
            for (const auto& s : plan.subtasks)
                if (job && s.location_type == *job) covered = true;
            if (!covered) continue;
        }
        return plan;
    }
    auto fallback = templated_goal_plan(profile, town, rng);
    fallback.templated_fallback = true;
    return fallback;
}

}  // namespace normtown::goals
