#pragma once

#include <optional>
#include <string>
#include <vector>

#include "normtown/rng.hpp"
#include "normtown/util.hpp"

namespace normtown::population {

// One labelled share column from the demographics file. Weights are kept as
// loaded (reporting wants the raw shares, e.g. census columns that only sum to
// ~90% after truncation) and normalized on demand for sampling.
struct WeightTable {
    std::vector<std::string> labels;
    std::vector<double> weights;

    double total() const;
    std::vector<double> probabilities() const;  // weights / total()
    size_t index_of(const std::string& label) const;  // npos when absent
};

struct AgeBin {
    int lo = 0;
    int hi = 0;  // inclusive
    double weight = 0.0;
    std::string label() const;  // "25-29"
};

// Everything sample_profile needs, loaded from one JSON document. See
// data/demographics.json for the shipped defaults.
struct DemographicTables {
    std::vector<AgeBin> age_bins;
    WeightTable gender;
    WeightTable nationality;
    WeightTable occupation;
    WeightTable family_composition;     // kinds of family household
    WeightTable household_composition;  // family / lone / group
    double employment_rate = 0.8;
    // occupation label -> (location type label, probability); rows normalized.
    std::vector<std::pair<std::string, WeightTable>> occupation_location_probs;
    // location type label -> job titles drawn uniformly.
    std::vector<std::pair<std::string, std::vector<std::string>>> job_titles;
    // gender label -> weighted given names.
    std::vector<std::pair<std::string, WeightTable>> name_table;

    const WeightTable* location_probs_for(const std::string& occupation) const;
    const std::vector<std::string>* titles_for(const std::string& location_type) const;
    const WeightTable* names_for(const std::string& gender) const;
};

inline constexpr const char* kStudentOccupation = "Student";
inline constexpr const char* kNotInLabourForce = "Not in labour force / Retired";

struct AgentProfile {
    std::string id;
    std::string name;
    int age = 0;
    std::string age_bin;
    std::string gender;
    std::string nationality;
    std::string occupation;
    std::optional<std::string> job_title;
    std::optional<std::string> job_location_type;
    std::string family_role;   // partner / mother / father / parent / son / ...
    std::string household_id;  // filled by build_households

    json to_json() const;
    static AgentProfile from_json(const json& j);
};

// Directed edge; `kind` is what src is to dst (an edge (a, b, "parent") says a
// is b's parent). Symmetric kinds are stored in both directions, inverse kinds
// as a matched pair (parent/child, manager/subordinate, teacher/student).
struct RelationshipEdge {
    std::string src;
    std::string dst;
    std::string kind;

    bool operator==(const RelationshipEdge&) const = default;
};

struct Household {
    std::string id;
    std::string kind;                  // "family" | "lone" | "group"
    std::optional<std::string> composition;  // family kinds only
    std::vector<std::string> member_ids;
};

struct Population {
    uint64_t seed = 0;
    std::vector<AgentProfile> agents;        // sorted by id
    std::vector<Household> households;       // sorted by id
    std::vector<RelationshipEdge> relationships;  // sorted (src, dst, kind)

    const AgentProfile* find(const std::string& agent_id) const;
    json to_json() const;
    static Population from_json(const json& j);
};

// Parses and validates the demographics document. Throws MalformedTable when a
// column is missing, has an all-zero weight vector, carries a negative weight,
// or an age bin is inverted.
DemographicTables load_demographics(const json& doc);
DemographicTables load_demographics_file(const std::string& path);

// One profile draw: age bin by weight then uniform age inside the bin, then
// gender, name, nationality, then the employment rule.
AgentProfile sample_profile(const DemographicTables& tables, Rng& rng, const std::string& id);

// Employment rule: under 15 is a Student placed at School with no title; 65
// and over is out of the labour force with no job fields; otherwise employed
// with probability employment_rate, drawing occupation, then a location type
// from the occupation's row, then a title for that location type.
void assign_employment(const DemographicTables& tables, Rng& rng, AgentProfile& agent);

struct HouseholdBuild {
    std::vector<Household> households;
    std::vector<RelationshipEdge> edges;
    int demoted_to_lone = 0;  // agents placed alone after the failure budget
};

// Partitions every agent into exactly one household. Couples need differing
// gender labels and an age gap of at most 15 years; every parent-child pair
// needs a gap in [18, 45]; group households hold 2-4 members. After 50
// consecutive failed composition draws the remaining pool is demoted to lone
// households so the builder always terminates.
HouseholdBuild build_households(std::vector<AgentProfile>& agents, const DemographicTables& tables,
                                Rng& rng);

// Workplace and school ties. Agents sharing a job location type are chunked
// (in id order) into units of at most `unit_size`; within a unit students pair
// as classmates, student-staff pairs get teacher/student edges, and staff get
// manager/subordinate edges when exactly one title matches the manager
// heuristic (title contains "Manager", "Principal" or "Head"), else colleague.
std::vector<RelationshipEdge> build_institution_ties(const std::vector<AgentProfile>& agents,
                                                     int unit_size = 10);

bool title_matches_manager(const std::string& title);

// `count` extra symmetric ties with kinds friend/neighbour/stranger, no
// self-pairs, no duplicate (pair, kind).
std::vector<RelationshipEdge> add_background_ties(const std::vector<AgentProfile>& agents,
                                                  size_t count, Rng& rng);

struct PopulationConfig {
    int unit_size = 10;
    double background_tie_fraction = 0.005;  // ceil(fraction * n) extra ties
};

// Full pipeline: profiles, households, institution ties, background ties.
// Stream labels: "profiles", "households", "background".
Population sample_population(size_t n, const DemographicTables& tables, uint64_t seed,
                             const PopulationConfig& config = {});

}  // namespace normtown::population
