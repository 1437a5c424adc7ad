#include <memory>
#include <string>
#include <vector>

#include "doctest.h"
#include "normtown/engine.hpp"
#include "normtown/errors.hpp"
#include "normtown/policy.hpp"
#include "normtown/scripted.hpp"
#include "normtown/verifier.hpp"

using namespace normtown;
using namespace normtown::verifier;

namespace {

// Minimal judged scene: one target, one plan, one recorded step.
struct Scene {
    population::AgentProfile target;
    goals::GoalPlan plan;
    engine::TrajectoryStep step;
    VerifierContext ctx;

    Scene() {
        target.id = "a1";
        target.name = "Nikos Pappas";
        target.age = 34;
        target.gender = "Male";
        target.nationality = "Greek";
        target.occupation = "Professionals";
        target.job_title = "Analyst";

        plan.target_id = "a1";
        plan.goal_text = "steady day";
        for (int i = 0; i < 4; ++i) {
            goals::Subtask s;
            s.id = "s" + std::to_string(i + 1);
            s.title = s.id;
            s.desc = s.id;
            s.location_type = world::LocationType::Park;
            s.window_start = 420 + i * 225;
            s.window_end = 420 + (i + 1) * 225;
            plan.subtasks.push_back(s);
        }

        step.step = 3;
        step.tau = 540;
        step.start_location = "loc_park_1";
        step.target_location = "loc_park_1";
        step.target_location_type = "Park";
        step.target_action = json{{"type", "wait"}};

        ctx.target = &target;
        ctx.plan = &plan;
        ctx.current_subtask_index = 1;
        ctx.completed_subtask_ids = {"s1"};
        ctx.segment = {&step};
        ctx.current = &step;
        ctx.world_facts = "At 09:00 in loc_park_1 (Park). Present: nobody else.";
    }

    void add_norms(int count) {
        for (int i = 0; i < count; ++i) {
            world::NormRecord n;
            n.id = "norm_x" + std::to_string(i);
            n.text = "rule " + std::to_string(i);
            n.nationality = "Greek";
            n.location_types = {world::LocationType::Park};
            ctx.norms_in_force.push_back(n);
        }
    }
};

using Reply = std::function<std::string(const policy::ScriptedCall&)>;

policy::ScriptedBackend make_judge(Reply reply) {
    return policy::ScriptedBackend("test_judge",
                                   [reply](const policy::ScriptedCall& call)
                                       -> backend::ScoredCompletion {
                                       return {reply(call), {}, "stop"};
                                   });
}

bool is_norm_prompt(const std::string& prompt) {
    return prompt.find("Determine norm violations") != std::string::npos;
}

// The norms under judgment are dumped after this marker (the reply-shape
// example earlier in the prompt is not valid JSON, so skip past it).
json norms_in_prompt(const std::string& prompt) {
    auto start = prompt.find("Norms to check: ");
    REQUIRE(start != std::string::npos);
    auto j = policy::extract_json(prompt.substr(start));
    REQUIRE(j.has_value());
    REQUIRE(j->is_array());
    return *j;
}

// Answers every norm batch by echoing the prompt's norm ids with a fixed bit.
std::string answer_norms(const std::string& prompt, int bit) {
    json out = json::array();
    for (const auto& entry : norms_in_prompt(prompt))
        out.push_back(json{{"id", entry["id"]}, {"violated", bit}});
    return out.dump();
}

}  // namespace

TEST_CASE("judge_norms batches forty norms per query") {
    Scene scene;
    scene.add_norms(85);

    int norm_calls = 0;
    std::vector<size_t> batch_sizes;
    auto judge = make_judge([&](const policy::ScriptedCall& call) -> std::string {
        REQUIRE(is_norm_prompt(call.prompt));
        ++norm_calls;
        batch_sizes.push_back(norms_in_prompt(call.prompt).size());
        return answer_norms(call.prompt, 1);
    });

    VerifierConfig config;
    auto out = judge_norms(judge, scene.ctx, config);
    CHECK(norm_calls == 3);
    CHECK(batch_sizes == std::vector<size_t>{40, 40, 5});
    CHECK(out.verdicts.size() == 85);
    CHECK(out.violation == doctest::Approx(1.0));
    CHECK(out.parse_failures == 0);

    for (const auto& [id, v] : out.verdicts) CHECK(v == 1);
}

TEST_CASE("judge_norms defaults unreadable verdicts to no violation") {
    Scene scene;
    scene.add_norms(4);
    VerifierConfig config;

    auto garbage = make_judge([](const policy::ScriptedCall&) { return std::string("???"); });
    auto out = judge_norms(garbage, scene.ctx, config);
    CHECK(out.violation == doctest::Approx(0.0));
    CHECK(out.parse_failures == 4);
    for (const auto& [id, v] : out.verdicts) CHECK(v == 0);

    // Partial coverage: verdicts for two ids, the others default.
    auto partial = make_judge([](const policy::ScriptedCall&) {
        return json::array({json{{"id", "norm_x0"}, {"violated", 1}},
                            json{{"id", "norm_x2"}, {"violated", 1}},
                            json{{"id", "norm_unheard_of"}, {"violated", 1}}})
            .dump();
    });
    out = judge_norms(partial, scene.ctx, config);
    CHECK(out.verdicts.at("norm_x0") == 1);
    CHECK(out.verdicts.at("norm_x1") == 0);
    CHECK(out.verdicts.at("norm_x2") == 1);
    CHECK(out.verdicts.at("norm_x3") == 0);
    CHECK(out.verdicts.count("norm_unheard_of") == 0);
    CHECK(out.violation == doctest::Approx(0.5));
    CHECK(out.parse_failures == 2);
}

TEST_CASE("judge_norms with nothing in force never queries the judge") {
    Scene scene;
    int calls = 0;
    auto judge = make_judge([&](const policy::ScriptedCall&) {
        ++calls;
        return std::string("[]");
    });
    VerifierConfig config;
    auto out = judge_norms(judge, scene.ctx, config);
    CHECK(calls == 0);
    CHECK(out.violation == doctest::Approx(0.0));
    CHECK(out.verdicts.empty());
}

TEST_CASE("judge_goal reads the done bit and skips finished plans") {
    Scene scene;
    VerifierConfig config;

    auto yes = make_judge([](const policy::ScriptedCall&) {
        return std::string("{\"done\": 1}");
    });
    CHECK(judge_goal(yes, scene.ctx, config).done == 1);

    auto no = make_judge([](const policy::ScriptedCall&) {
        return std::string("{\"done\": false}");
    });
    CHECK(judge_goal(no, scene.ctx, config).done == 0);

    auto broken = make_judge([](const policy::ScriptedCall&) {
        return std::string("dunno");
    });
    auto out = judge_goal(broken, scene.ctx, config);
    CHECK(out.done == 0);
    CHECK(out.parse_failures == 1);

    int calls = 0;
    auto counting = make_judge([&](const policy::ScriptedCall&) {
        ++calls;
        return std::string("{\"done\": 1}");
    });
    Scene finished;
    finished.ctx.current_subtask_index = -1;
    CHECK(judge_goal(counting, finished.ctx, config).done == 0);
    CHECK(calls == 0);
}

TEST_CASE("judge_profile scores one bit or a per-attribute mean") {
    Scene scene;

    VerifierConfig single;
    auto yes = make_judge([](const policy::ScriptedCall&) {
        return std::string("{\"n_hat\": 1}");
    });
    CHECK(judge_profile(yes, scene.ctx, single).score == doctest::Approx(1.0));

    VerifierConfig per_attr;
    per_attr.per_attribute_faithfulness = true;
    int calls = 0;
    auto mixed = make_judge([&](const policy::ScriptedCall& call) -> std::string {
        ++calls;
        // Approve the age, gender and nationality questions only.
        bool approve =
            call.prompt.find("Attribute under review: age =") != std::string::npos ||
            call.prompt.find("Attribute under review: gender =") != std::string::npos ||
            call.prompt.find("Attribute under review: nationality =") != std::string::npos;
        return approve ? "{\"n_hat\": 1}" : "{\"n_hat\": 0}";
    });
    auto out = judge_profile(mixed, scene.ctx, per_attr);
    CHECK(calls == 5);  // age, gender, nationality, occupation, job title
    CHECK(out.score == doctest::Approx(3.0 / 5.0));

    // Without a job title the attribute list shrinks to four.
    Scene untitled;
    untitled.target.job_title.reset();
    calls = 0;
    auto all_yes = make_judge([&](const policy::ScriptedCall&) -> std::string {
        ++calls;
        return "{\"n_hat\": 1}";
    });
    out = judge_profile(all_yes, untitled.ctx, per_attr);
    CHECK(calls == 4);
    CHECK(out.score == doctest::Approx(1.0));
}

TEST_CASE("judge_coherence splits its two bits") {
    Scene scene;
    VerifierConfig config;

    auto split = make_judge([](const policy::ScriptedCall&) {
        return std::string("{\"a_hat\": 1, \"b_hat\": 0}");
    });
    auto out = judge_coherence(split, scene.ctx, config);
    CHECK(out.a_hat == 1);
    CHECK(out.b_hat == 0);
    CHECK(out.parse_failures == 0);

    auto noise = make_judge([](const policy::ScriptedCall&) {
        return std::string("n/a");
    });
    out = judge_coherence(noise, scene.ctx, config);
    CHECK(out.a_hat == 0);
    CHECK(out.b_hat == 0);
    CHECK(out.parse_failures == 2);

    auto half = make_judge([](const policy::ScriptedCall&) {
        return std::string("{\"a_hat\": 1}");
    });
    out = judge_coherence(half, scene.ctx, config);
    CHECK(out.a_hat == 1);
    CHECK(out.parse_failures == 1);
}

TEST_CASE("judge_step assembles the five metrics") {
    Scene scene;
    scene.add_norms(2);
    scene.ctx.partner_nationalities = {"Italian", "Italian", "Dutch"};

    auto judge = make_judge([](const policy::ScriptedCall& call) -> std::string {
        const std::string& p = call.prompt;
        if (p.find("CURRENT subtask has been completed") != std::string::npos)
            return "{\"done\": 1}";
        if (is_norm_prompt(p))
            return answer_norms(p, 1);
        if (p.find("plausibility") != std::string::npos)
            return "{\"n_hat\": 1}";
        return "{\"a_hat\": 1, \"b_hat\": 0}";
    });

    VerifierConfig config;
    auto out = judge_step(judge, scene.ctx, config);

    // s1 was already complete; the goal judge marks s2 (index 1) done.
    CHECK(out.g == std::vector<int>{1, 1, 0, 0});
    CHECK(out.goal_progress == doctest::Approx(0.5));
    CHECK(out.norm_violation == doctest::Approx(1.0));
    CHECK(out.faithfulness == doctest::Approx(1.0));
    CHECK(out.coherence == 1);
    CHECK(out.context_awareness == 0);
    CHECK(out.parse_failures == 0);
    CHECK(out.location_type == "Park");
    CHECK(out.partner_nationalities ==
          std::vector<std::string>{"Italian", "Italian", "Dutch"});
}

TEST_CASE("offline verification matches the online hook") {
    // Full scripted day judged online, then re-judged from the serialized file.
    auto tables = population::load_demographics_file(std::string(NORMTOWN_DATA_DIR) +
                                                     "/demographics.json");
    auto pop = population::sample_population(60, tables, 2024);
    Rng rng(2024);
    auto town_rng = rng.split("town");
    auto town = world::build_town(world::default_location_counts(), town_rng);
    auto norms = world::load_norms_file(std::string(NORMTOWN_DATA_DIR) + "/norms.jsonl");
    auto norm_rng = rng.split("norms");
    world::attach_norms(town, norms, norm_rng);
    auto place_rng = rng.split("placement");
    auto assignment = world::assign_homes_jobs(pop, town, place_rng);
    const std::string target_id = pop.agents.front().id;
    auto plan_rng = rng.split("plan");
    auto plan = goals::templated_goal_plan(*pop.find(target_id), town, plan_rng);

    auto state = engine::init_state(pop, town, assignment, norms, plan, target_id);
    auto target = scripted::goal_seeker(town);
    auto supporting = scripted::chatter();
    auto judge = scripted::rule_judge();
    VerifierConfig config;
    engine::RunConfig run_config;
    run_config.seed = 2024;
    auto traj = engine::run_day(state, *target, *supporting, run_config,
                                make_online_hook(judge, config));

    REQUIRE_FALSE(traj.judgments.empty());
    auto offline = verify_trajectory(*judge, traj, pop, norms, plan, config);
    REQUIRE(offline.size() == traj.judgments.size());
    for (size_t i = 0; i < offline.size(); ++i)
        CHECK(offline[i].to_json() == traj.judgments[i].to_json());

    engine::Trajectory renamed = traj;
    renamed.header["target_id"] = "agent_ghost";
    CHECK_THROWS_AS(verify_trajectory(*judge, renamed, pop, norms, plan, config),
                    UnknownTarget);
}

TEST_CASE("aggregate means the day and slices it") {
    std::vector<judgments::StepJudgment> day(4);
    const double violations[] = {0.0, 0.5, 0.0, 0.25};
    const char* locations[] = {"Apartment", "Park", "Park", "Restaurant"};
    for (int i = 0; i < 4; ++i) {
        day[i].step = i;
        day[i].g = std::vector<int>(4, 0);
        for (int k = 0; k <= i; ++k) day[i].g[k] = 1;
        day[i].goal_progress = (i + 1) / 4.0;
        day[i].norm_violation = violations[i];
        day[i].faithfulness = 1.0;
        day[i].context_awareness = i % 2;
        day[i].coherence = 1;
        day[i].location_type = locations[i];
    }
    day[1].partner_nationalities = {"Greek", "Greek", "Dutch"};
    day[3].partner_nationalities = {"Greek"};

    auto m = judgments::aggregate(day);
    CHECK(m.steps == 4);
    CHECK(m.norm_violation == doctest::Approx(0.1875));
    CHECK(m.norm_adherence == doctest::Approx(0.8125));
    CHECK(m.goal_completion == doctest::Approx(1.0));
    CHECK(m.faithfulness == doctest::Approx(1.0));
    CHECK(m.context_awareness == doctest::Approx(0.5));
    CHECK(m.coherence == doctest::Approx(1.0));

    REQUIRE(m.by_location.count("Park") == 1);
    CHECK(m.by_location.at("Park").steps == 2);
    CHECK(m.by_location.at("Park").norm_violation == doctest::Approx(0.25));
    CHECK(m.by_location.at("Park").norm_adherence == doctest::Approx(0.75));
    CHECK(m.by_location.at("Apartment").steps == 1);
    CHECK(m.by_location.at("Restaurant").norm_violation == doctest::Approx(0.25));

    // Duplicate partners in one step count once; separate steps accumulate.
    REQUIRE(m.by_partner_nationality.count("Greek") == 1);
    CHECK(m.by_partner_nationality.at("Greek").steps == 2);
    CHECK(m.by_partner_nationality.at("Greek").norm_violation ==
          doctest::Approx((0.5 + 0.25) / 2.0));
    CHECK(m.by_partner_nationality.at("Dutch").steps == 1);

    CHECK_THROWS_AS(judgments::aggregate({}), EmptyTrajectory);
}

TEST_CASE("metrics serialize and reload") {
    std::vector<judgments::StepJudgment> day(2);
    day[0].norm_violation = 0.5;
    day[0].location_type = "Park";
    day[0].norm_verdicts = {{"norm_1", 1}, {"norm_2", 0}};
    day[1].goal_progress = 1.0;
    day[1].location_type = "Gym";
    day[1].partner_nationalities = {"Irish"};

    auto m = judgments::aggregate(day);
    auto back = judgments::TrajectoryMetrics::from_json(m.to_json());
    CHECK(back.to_json() == m.to_json());

    auto s = day[0];
    auto round = judgments::StepJudgment::from_json(s.to_json());
    CHECK(round.to_json() == s.to_json());
}

TEST_CASE("world facts name the bystanders") {
    population::Population pop;
    population::AgentProfile a;
    a.id = "a2";
    a.name = "Maria Rossi";
    a.nationality = "Italian";
    pop.agents.push_back(a);

    engine::TrajectoryStep step;
    step.tau = 630;
    step.target_location = "loc_park_3";
    step.target_location_type = "Park";

    std::string solitary = world_facts_line(step, pop);
    CHECK(solitary.find("10:30") != std::string::npos);
    CHECK(solitary.find("nobody else") != std::string::npos);

    step.visible.push_back({"a2", "Italian"});
    std::string crowded = world_facts_line(step, pop);
    CHECK(crowded.find("Maria Rossi (Italian)") != std::string::npos);
}
