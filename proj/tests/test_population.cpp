#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "normtown/errors.hpp"
#include "normtown/population.hpp"

using namespace normtown;
using namespace normtown::population;

namespace {

DemographicTables default_tables() {
    return load_demographics_file(std::string(NORMTOWN_DATA_DIR) + "/demographics.json");
}

const AgentProfile& agent_of(const Population& pop, const std::string& id) {
    const AgentProfile* a = pop.find(id);
    REQUIRE(a != nullptr);
    return *a;
}

}  // namespace

TEST_CASE("weight table normalizes raw shares") {
    DemographicTables t = default_tables();
    // The age column keeps census shares that sum to 92.4, not 100.
    double total = t.age_bins[0].weight;
    for (size_t i = 1; i < t.age_bins.size(); ++i) total += t.age_bins[i].weight;
    CHECK(total == doctest::Approx(92.4));

    // 25-29 carries weight 19.8, so its sampling probability is 19.8 / 92.4.
    auto probs = t.nationality.probabilities();
    CHECK(probs.size() == t.nationality.labels.size());
    double sum = 0.0;
    for (double p : probs) sum += p;
    CHECK(sum == doctest::Approx(1.0));
    size_t english = t.nationality.index_of("English");
    REQUIRE(english != std::string::npos);
    CHECK(probs[english] == doctest::Approx(24.8 / 89.9));
}

TEST_CASE("age bin labels render lo-hi") {
    AgeBin bin{25, 29, 19.8};
    CHECK(bin.label() == "25-29");
}

TEST_CASE("load_demographics rejects broken tables") {
    json doc = json::parse(R"({"age_bins": [{"lo": 20, "hi": 24, "weight": 1.0}],
                              "gender_weights": {"Male": 1.0},
                              "nationality_weights": {"English": 1.0},
                              "occupation_weights": {"Professionals": 1.0},
                              "family_composition_weights": {"Couple with children": 1.0},
                              "household_composition_weights": {"Family": 1.0},
                              "employment_rate": 0.8,
                              "occupation_location_probs": {"Professionals": {"Office": 1.0}},
                              "job_titles": {"Office": ["Analyst"]},
                              "name_table": {"Male": {"Oliver": 1.0}}})");

    CHECK_NOTHROW(load_demographics(doc));

    json missing = doc;
    missing.erase("gender_weights");
    CHECK_THROWS_AS(load_demographics(missing), MalformedTable);

    json negative = doc;
    negative["nationality_weights"]["English"] = -1.0;
    CHECK_THROWS_AS(load_demographics(negative), MalformedTable);

    json zeroed = doc;
    zeroed["occupation_weights"]["Professionals"] = 0.0;
    CHECK_THROWS_AS(load_demographics(zeroed), MalformedTable);

    json inverted = doc;
    inverted["age_bins"][0] = json{{"lo", 24}, {"hi", 20}, {"weight", 1.0}};
    CHECK_THROWS_AS(load_demographics(inverted), MalformedTable);
}

TEST_CASE("sampled marginals track the tables") {
    DemographicTables t = default_tables();
    const size_t n = 5000;
    Rng rng(404);
    std::map<std::string, int> nationality_counts, gender_counts;
    for (size_t i = 0; i < n; ++i) {
        AgentProfile a = sample_profile(t, rng, "a" + std::to_string(i));
        ++nationality_counts[a.nationality];
        ++gender_counts[a.gender];
        CHECK_FALSE(a.name.empty());
        CHECK(a.age >= 15);
        CHECK(a.age <= 85);
    }
    double slack = 3.0 / std::sqrt(static_cast<double>(n)) + 0.005;
    auto nat_probs = t.nationality.probabilities();
    for (size_t i = 0; i < t.nationality.labels.size(); ++i) {
        double observed =
            nationality_counts[t.nationality.labels[i]] / static_cast<double>(n);
        CHECK(std::fabs(observed - nat_probs[i]) < slack);
    }
    auto gender_probs = t.gender.probabilities();
    for (size_t i = 0; i < t.gender.labels.size(); ++i) {
        double observed = gender_counts[t.gender.labels[i]] / static_cast<double>(n);
        CHECK(std::fabs(observed - gender_probs[i]) < slack);
    }
}

TEST_CASE("employment rule handles the age edges") {
    DemographicTables t = default_tables();
    Rng rng(7);

    AgentProfile child;
    child.age = 12;
    assign_employment(t, rng, child);
    CHECK(child.occupation == kStudentOccupation);
    REQUIRE(child.job_location_type.has_value());
    CHECK(*child.job_location_type == "School");
    CHECK_FALSE(child.job_title.has_value());

    AgentProfile retiree;
    retiree.age = 70;
    assign_employment(t, rng, retiree);
    CHECK(retiree.occupation == kNotInLabourForce);
    CHECK_FALSE(retiree.job_title.has_value());
    CHECK_FALSE(retiree.job_location_type.has_value());

    // Working-age agents are employed at roughly the configured rate.
    int employed = 0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) {
        AgentProfile a;
        a.age = 35;
        assign_employment(t, rng, a);
        if (a.job_location_type.has_value()) {
            ++employed;
            CHECK(a.job_title.has_value());
            const WeightTable* row = t.location_probs_for(a.occupation);
            REQUIRE(row != nullptr);
            CHECK(row->index_of(*a.job_location_type) != std::string::npos);
            const auto* titles = t.titles_for(*a.job_location_type);
            REQUIRE(titles != nullptr);
            CHECK(std::find(titles->begin(), titles->end(), *a.job_title) != titles->end());
        } else {
            CHECK(a.occupation == kNotInLabourForce);
        }
    }
    CHECK(employed / static_cast<double>(n) == doctest::Approx(t.employment_rate).epsilon(0.05));
}

TEST_CASE("households partition agents and respect composition rules") {
    DemographicTables t = default_tables();
    for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        Population pop = sample_population(400, t, seed);

        std::set<std::string> placed;
        for (const auto& hh : pop.households) {
            CHECK_FALSE(hh.member_ids.empty());
            if (hh.kind == "group") {
                CHECK(hh.member_ids.size() >= 2);
                CHECK(hh.member_ids.size() <= 4);
            }
            if (hh.kind == "lone") CHECK(hh.member_ids.size() == 1);
            for (const auto& id : hh.member_ids) {
                CHECK(placed.insert(id).second);  // exclusivity
                CHECK(agent_of(pop, id).household_id == hh.id);
            }
        }
        CHECK(placed.size() == pop.agents.size());

        for (const auto& e : pop.relationships) {
            if (e.kind == "spouse") {
                const auto& a = agent_of(pop, e.src);
                const auto& b = agent_of(pop, e.dst);
                CHECK(a.gender != b.gender);
                CHECK(std::abs(a.age - b.age) <= 15);
            }
            if (e.kind == "parent") {
                int gap = agent_of(pop, e.src).age - agent_of(pop, e.dst).age;
                CHECK(gap >= 18);
                CHECK(gap <= 45);
            }
        }
    }
}

TEST_CASE("relationship edges come in matched pairs") {
    DemographicTables t = default_tables();
    Population pop = sample_population(300, t, 99);

    auto has_edge = [&](const std::string& src, const std::string& dst,
                        const std::string& kind) {
        return std::find(pop.relationships.begin(), pop.relationships.end(),
                         RelationshipEdge{src, dst, kind}) != pop.relationships.end();
    };
    const std::map<std::string, std::string> inverse = {
        {"parent", "child"},        {"child", "parent"},
        {"manager", "subordinate"}, {"subordinate", "manager"},
        {"teacher", "student"},     {"student", "teacher"},
    };
    for (const auto& e : pop.relationships) {
        CHECK(e.src != e.dst);
        auto it = inverse.find(e.kind);
        std::string expect = it != inverse.end() ? it->second : e.kind;
        CHECK(has_edge(e.dst, e.src, expect));
    }
}

TEST_CASE("institution ties stay inside small units") {
    DemographicTables t = default_tables();
    Population pop = sample_population(300, t, 31);

    // Group colleagues by connected component; components must fit the unit.
    std::map<std::string, std::set<std::string>> peers;
    for (const auto& e : pop.relationships) {
        if (e.kind == "colleague" || e.kind == "manager" || e.kind == "subordinate" ||
            e.kind == "classmate" || e.kind == "teacher" || e.kind == "student") {
            peers[e.src].insert(e.dst);
            const auto& a = agent_of(pop, e.src);
            const auto& b = agent_of(pop, e.dst);
            REQUIRE(a.job_location_type.has_value());
            REQUIRE(b.job_location_type.has_value());
            CHECK(*a.job_location_type == *b.job_location_type);
        }
    }
    for (const auto& [id, others] : peers) CHECK(others.size() < 10);
}

TEST_CASE("manager heuristic matches leading titles") {
    CHECK(title_matches_manager("Office Manager"));
    CHECK(title_matches_manager("School Principal"));
    CHECK(title_matches_manager("Head Chef"));
    CHECK_FALSE(title_matches_manager("Sous Chef"));
    CHECK_FALSE(title_matches_manager("Teacher"));
}

TEST_CASE("background ties avoid self pairs and duplicates") {
    DemographicTables t = default_tables();
    Rng rng(8);
    std::vector<AgentProfile> agents;
    for (int i = 0; i < 40; ++i) {
        AgentProfile a;
        a.id = "a" + std::to_string(i);
        agents.push_back(a);
    }
    auto edges = add_background_ties(agents, 25, rng);
    CHECK(edges.size() == 50);  // symmetric storage, two rows per tie
    std::set<std::vector<std::string>> seen;
    for (const auto& e : edges) {
        CHECK(e.src != e.dst);
        CHECK((e.kind == "friend" || e.kind == "neighbour" || e.kind == "stranger"));
        CHECK(seen.insert({e.src, e.dst, e.kind}).second);
    }
}

TEST_CASE("population serializes and reloads byte for byte") {
    DemographicTables t = default_tables();
    Population pop = sample_population(120, t, 555);
    json j = pop.to_json();
    Population back = Population::from_json(j);
    CHECK(back.seed == pop.seed);
    CHECK(back.agents.size() == pop.agents.size());
    CHECK(back.to_json() == j);
    CHECK(back.relationships == pop.relationships);
}

TEST_CASE("sampling is reproducible by seed") {
    DemographicTables t = default_tables();
    Population a = sample_population(200, t, 777);
    Population b = sample_population(200, t, 777);
    CHECK(a.to_json() == b.to_json());
    Population c = sample_population(200, t, 778);
    CHECK(a.to_json() != c.to_json());
}
