#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "doctest.h"
#include "normtown/engine.hpp"
#include "normtown/errors.hpp"
#include "normtown/scripted.hpp"

using namespace normtown;
using namespace normtown::engine;

namespace {

namespace fs = std::filesystem;

// Deterministic full pipeline at a small scale, shared by the run_day tests.
struct SmallSim {
    population::DemographicTables tables;
    population::Population pop;
    world::TownGraph town;
    world::Assignment assignment;
    world::NormSet norms;
    goals::GoalPlan plan;
    std::string target_id;

    explicit SmallSim(uint64_t seed = 1234, size_t n = 60)
        : tables(population::load_demographics_file(std::string(NORMTOWN_DATA_DIR) +
                                                    "/demographics.json")) {
        pop = population::sample_population(n, tables, seed);
        Rng rng(seed);
        auto town_rng = rng.split("town");
        town = world::build_town(world::default_location_counts(), town_rng);
        norms = world::load_norms_file(std::string(NORMTOWN_DATA_DIR) + "/norms.jsonl");
        auto norm_rng = rng.split("norms");
        world::attach_norms(town, norms, norm_rng);
        auto place_rng = rng.split("placement");
        assignment = world::assign_homes_jobs(pop, town, place_rng);
        target_id = pop.agents.front().id;
        auto plan_rng = rng.split("plan");
        plan = goals::templated_goal_plan(*pop.find(target_id), town, plan_rng);
    }

    SimState state() const {
        return init_state(pop, town, assignment, norms, plan, target_id);
    }
};

// Marks the current subtask done whenever the step ends at its location type
// with a non-move action; fixed 1-bits elsewhere.
StepJudge location_judge() {
    return [](const SimState& state, const TrajectoryStep& rec) {
        judgments::StepJudgment out;
        out.g = state.theta;
        int idx = state.current_subtask_index();
        if (idx >= 0) {
            const auto& st = state.plan->subtasks[static_cast<size_t>(idx)];
            bool at_type = rec.target_location_type == world::to_string(st.location_type);
            bool moved = rec.target_action.value("type", "") == "move";
            if (at_type && !moved) out.g[static_cast<size_t>(idx)] = 1;
        }
        out.coherence = 1;
        out.context_awareness = 1;
        out.faithfulness = 1.0;
        out.location_type = rec.target_location_type;
        return out;
    };
}

Trajectory run_scripted_day(const SmallSim& sim, SimState& state, uint64_t seed = 7) {
    auto target = scripted::goal_seeker(sim.town);
    auto supporting = scripted::chatter();
    RunConfig config;
    config.seed = seed;
    config.config_hash = "testhash";
    return run_day(state, *target, *supporting, config, location_judge());
}

}  // namespace

TEST_CASE("clock advances by exactly the two legal increments") {
    Rng rng(1);
    SimClock clock;
    CHECK(clock.tau == 7 * 60);
    int advances = 0;
    for (int i = 0; i < 10000; ++i) {
        bool conversing = rng.bernoulli(0.4);
        int before = clock.tau;
        int step_before = clock.step;
        if (clock.advance(conversing)) {
            ++advances;
            CHECK(clock.tau - before == (conversing ? 5 : 30));
            CHECK(clock.step == step_before + 1);
        } else {
            CHECK(clock.tau == before);  // refused advances leave the clock alone
            CHECK(clock.tau + (conversing ? 5 : 30) > 22 * 60);
            break;
        }
        CHECK(clock.tau <= 22 * 60);
    }
    CHECK(advances > 0);
}

TEST_CASE("init_state wires locations, theta and the phonebook") {
    SmallSim sim;
    SimState state = sim.state();

    CHECK(state.theta.size() == sim.plan.subtasks.size());
    CHECK(std::count(state.theta.begin(), state.theta.end(), 1) == 0);
    for (const auto& agent : sim.pop.agents)
        CHECK(state.agent_location.at(agent.id) == sim.assignment.home.at(agent.id));

    // Phonebook: non-stranger contacts, one entry per contact.
    for (const auto& [owner, contacts] : state.phonebook) {
        std::set<std::string> seen;
        for (const auto& c : contacts) {
            CHECK(c.kind != "stranger");
            CHECK(seen.insert(c.id).second);
            CHECK_FALSE(state.relationship_kinds(owner, c.id).empty());
        }
    }

    CHECK_THROWS_AS(init_state(sim.pop, sim.town, sim.assignment, sim.norms, sim.plan,
                               "agent_nobody"),
                    UnknownTarget);
}

TEST_CASE("every enumerated legal action passes validation") {
    SmallSim sim;
    SimState state = sim.state();

    int checked = 0;
    for (const auto& agent : sim.pop.agents) {
        auto actions = legal_actions(state, agent.id);
        CHECK_FALSE(actions.empty());  // wait is always present
        for (const auto& a : actions) {
            auto err = validate_action(state, agent.id, a);
            if (err) {
                CAPTURE(agent.id);
                CAPTURE(*err);
                CHECK_FALSE(err.has_value());
            }
            ++checked;
        }
        if (checked > 2000) break;
    }
    CHECK(checked > 50);
}

TEST_CASE("validate_action rejects the classic illegal moves") {
    SmallSim sim;
    SimState state = sim.state();
    const std::string& target = sim.target_id;
    const auto& loc = state.location_of(target);

    // A location that exists but is not adjacent (or is where we stand).
    std::string far;
    for (const auto& node : sim.town.nodes)
        if (node.id != loc.id && !sim.town.adjacent(loc.id, node.id)) far = node.id;
    REQUIRE_FALSE(far.empty());
    CHECK(validate_action(state, target, MoveAction{far}).has_value());
    CHECK(validate_action(state, target, MoveAction{"loc_missing"}).has_value());
    CHECK_FALSE(validate_action(state, target, WaitAction{}).has_value());

    // Talking needs a co-located, free listener and a non-empty utterance.
    CHECK(validate_action(state, target, TalkAction{{target}, "hi", ""}).has_value());
    CHECK(validate_action(state, target, TalkAction{{}, "hi", ""}).has_value());
    std::string elsewhere;
    for (const auto& agent : sim.pop.agents)
        if (state.agent_location.at(agent.id) != loc.id) elsewhere = agent.id;
    REQUIRE_FALSE(elsewhere.empty());
    CHECK(validate_action(state, target, TalkAction{{elsewhere}, "hi", ""}).has_value());
}

TEST_CASE("a scripted day completes the plan and stays in bounds") {
    SmallSim sim;
    SimState state = sim.state();
    Trajectory traj = run_scripted_day(sim, state);

    REQUIRE_FALSE(traj.steps.empty());
    CHECK(traj.steps.size() <= static_cast<size_t>(kMaxSteps));
    CHECK(traj.judgments.size() == traj.steps.size());
    CHECK(traj.header["target_id"] == sim.target_id);
    CHECK(traj.header["config_hash"] == "testhash");
    CHECK(traj.header["target_model"] == "scripted:goal_seeker");

    // The goal seeker should finish a templated plan comfortably inside a day.
    CHECK(traj.judgments.back().goal_progress == doctest::Approx(1.0));

    std::vector<int> prev(sim.plan.subtasks.size(), 0);
    int tau = goals::kDayStart;
    for (size_t i = 0; i < traj.steps.size(); ++i) {
        const auto& rec = traj.steps[i];
        CHECK(rec.step == static_cast<int>(i));
        if (i > 0) {
            int delta = rec.tau - traj.steps[i - 1].tau;
            CHECK(delta == (traj.steps[i - 1].target_in_conversation ? 5 : 30));
        } else {
            CHECK(rec.tau == tau);
        }
        CHECK(rec.tau <= goals::kDayEnd);
        REQUIRE(rec.theta.size() == prev.size());
        for (size_t k = 0; k < prev.size(); ++k) CHECK(rec.theta[k] >= prev[k]);
        prev = rec.theta;
        // The judgment's g snapshot mirrors the engine's theta.
        CHECK(traj.judgments[i].g == rec.theta);
    }
}

TEST_CASE("scripted days replay identically") {
    SmallSim sim;
    SimState a = sim.state();
    SimState b = sim.state();
    Trajectory ta = run_scripted_day(sim, a);
    Trajectory tb = run_scripted_day(sim, b);
    REQUIRE(ta.steps.size() == tb.steps.size());
    for (size_t i = 0; i < ta.steps.size(); ++i)
        CHECK(ta.steps[i].to_json() == tb.steps[i].to_json());
}

TEST_CASE("trajectories survive the jsonl round trip") {
    SmallSim sim;
    SimState state = sim.state();
    Trajectory traj = run_scripted_day(sim, state);

    const std::string path = (fs::temp_directory_path() / "normtown_traj_test.jsonl").string();
    traj.save_jsonl(path);
    Trajectory back = Trajectory::load_jsonl(path);
    CHECK(back.header == traj.header);
    REQUIRE(back.steps.size() == traj.steps.size());
    for (size_t i = 0; i < traj.steps.size(); ++i)
        CHECK(back.steps[i].to_json() == traj.steps[i].to_json());
    REQUIRE(back.judgments.size() == traj.judgments.size());
    for (size_t i = 0; i < traj.judgments.size(); ++i)
        CHECK(back.judgments[i].to_json() == traj.judgments[i].to_json());
    fs::remove(path);

    const std::string empty = (fs::temp_directory_path() / "normtown_empty.jsonl").string();
    write_file(empty, "");
    CHECK_THROWS_AS(Trajectory::load_jsonl(empty), EmptyTrajectory);
    fs::remove(empty);
}

TEST_CASE("audit accepts genuine trajectories") {
    SmallSim sim;
    SimState state = sim.state();
    Trajectory traj = run_scripted_day(sim, state);
    auto errors = audit_trajectory(traj, sim.pop, sim.town, sim.assignment, sim.norms, sim.plan);
    for (const auto& e : errors) CAPTURE(e);
    CHECK(errors.empty());
}

TEST_CASE("audit flags tampered trajectories") {
    SmallSim sim;

    auto fresh = [&]() {
        SimState state = sim.state();
        return run_scripted_day(sim, state);
    };

    SUBCASE("clock tampering") {
        Trajectory t = fresh();
        REQUIRE(t.steps.size() >= 2);
        t.steps[1].tau += 10;
        CHECK_FALSE(audit_trajectory(t, sim.pop, sim.town, sim.assignment, sim.norms, sim.plan)
                        .empty());
    }
    SUBCASE("teleporting move") {
        Trajectory t = fresh();
        std::string far;
        for (const auto& node : sim.town.nodes)
            if (!sim.town.adjacent(t.steps[0].start_location, node.id) &&
                node.id != t.steps[0].start_location)
                far = node.id;
        REQUIRE_FALSE(far.empty());
        t.steps[0].target_action = json{{"type", "move"}, {"location", far}};
        t.steps[0].target_location = far;
        CHECK_FALSE(audit_trajectory(t, sim.pop, sim.town, sim.assignment, sim.norms, sim.plan)
                        .empty());
    }
    SUBCASE("completion regression") {
        Trajectory t = fresh();
        REQUIRE_FALSE(t.steps.back().theta.empty());
        t.steps.back().theta[0] = 0;  // was completed earlier in the day
        REQUIRE(t.steps.size() >= 2);
        REQUIRE(t.steps[t.steps.size() - 2].theta[0] == 1);
        CHECK_FALSE(audit_trajectory(t, sim.pop, sim.town, sim.assignment, sim.norms, sim.plan)
                        .empty());
    }
    SUBCASE("forged norm set") {
        Trajectory t = fresh();
        t.steps[0].norm_ids_in_force.push_back("norm_001");
        t.steps[0].norm_ids_in_force.push_back("norm_001");
        CHECK_FALSE(audit_trajectory(t, sim.pop, sim.town, sim.assignment, sim.norms, sim.plan)
                        .empty());
    }
    SUBCASE("phantom bystander") {
        Trajectory t = fresh();
        t.steps[0].visible.push_back({"agent_999999", "Greek"});
        CHECK_FALSE(audit_trajectory(t, sim.pop, sim.town, sim.assignment, sim.norms, sim.plan)
                        .empty());
    }
}

TEST_CASE("random legal agents still audit clean") {
    SmallSim sim(777, 50);
    SimState state = sim.state();
    auto target = scripted::random_agent(99);
    auto supporting = scripted::chatter();
    RunConfig config;
    config.seed = 99;
    config.config_hash = "fuzz";
    Trajectory traj = run_day(state, *target, *supporting, config, location_judge());
    auto errors = audit_trajectory(traj, sim.pop, sim.town, sim.assignment, sim.norms, sim.plan);
    for (const auto& e : errors) CAPTURE(e);
    CHECK(errors.empty());
}

TEST_CASE("conversations respect the turn cap and close without the target") {
    SmallSim sim;
    SimState state = sim.state();
    Trajectory traj = run_scripted_day(sim, state);

    std::map<std::string, int> turns_per_conversation;
    for (const auto& rec : traj.steps)
        for (const auto& turn : rec.dialogue)
            ++turns_per_conversation[turn.conversation_id];
    for (const auto& [id, turns] : turns_per_conversation)
        CHECK(turns <= kConversationTurnCap);

    // After the day no conversation without the target is still active.
    for (const auto& conv : state.conversations)
        if (conv.active) CHECK(conv.involves_target);
}

TEST_CASE("action json round trips through the variant") {
    std::vector<Action> actions = {
        MoveAction{"loc_1"},
        TalkAction{{"a1", "a2"}, "hello", "greet"},
        LocationAction{"ORDER_FOOD", {{"menu_item", "soup"}}, {"a3"}, "one soup please"},
        PhoneAction{"message", "a4", "on my way"},
        WaitAction{},
    };
    for (const auto& a : actions) {
        json j = action_to_json(a);
        Action back = action_from_json(j);
        CHECK(action_to_json(back) == j);
    }
    CHECK(action_summary(MoveAction{"loc_9"}) == "moved to loc_9");
    CHECK(action_summary(WaitAction{}) == "waited");
}
