#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "normtown/population.hpp"
#include "normtown/rng.hpp"
#include "normtown/util.hpp"

namespace normtown::world {

enum class LocationType {
    School,
    Office,
    Apartment,
    Hospital,
    Park,
    ShoppingMall,
    Restaurant,
    Gym,
};

inline constexpr std::array<LocationType, 8> kAllLocationTypes = {
    LocationType::School,     LocationType::Office,     LocationType::Apartment,
    LocationType::Hospital,   LocationType::Park,       LocationType::ShoppingMall,
    LocationType::Restaurant, LocationType::Gym,
};

const std::string& to_string(LocationType t);
// Accepts the canonical name plus common aliases ("Shopping Mall", "Mall").
std::optional<LocationType> location_type_from(const std::string& name);

struct Location {
    std::string id;
    LocationType type = LocationType::Apartment;
    std::vector<std::string> norm_ids;           // attached by attach_norms
    std::vector<std::string> initial_agent_ids;  // filled by assign_homes_jobs
};

struct TownGraph {
    uint64_t seed = 0;
    std::vector<Location> nodes;  // ordered by id
    // Canonical undirected edges: each stored once as (min id, max id), sorted.
    std::vector<std::pair<std::string, std::string>> edges;

    const Location* find(const std::string& id) const;
    Location* find(const std::string& id);
    std::vector<std::string> neighbors(const std::string& id) const;
    bool adjacent(const std::string& a, const std::string& b) const;
    bool connected() const;
    std::vector<std::string> ids_of_type(LocationType t) const;

    json to_json() const;
    static TownGraph from_json(const json& j);
};

// Default node counts per type (110 nodes in total).
std::map<LocationType, int> default_location_counts();

// Random spanning tree over all nodes plus ceil(0.5 * |V|) extra distinct
// edges; connected by construction. Throws EmptyTown when counts sum to zero.
TownGraph build_town(const std::map<LocationType, int>& counts, Rng& rng);

// ---- norms ------------------------------------------------------------

struct NormRecord {
    std::string id;
    std::string text;
    std::string nationality;
    std::vector<LocationType> location_types;
};

struct NormSet {
    std::vector<NormRecord> records;  // file order
    const NormRecord* find(const std::string& id) const;
};

// Parses JSON-lines records {id, text, nationality, location_types}. Throws
// MalformedNorms on bad lines or unknown labels, DuplicateNormId on repeats.
// `valid_nationalities` defaults to accepting any non-empty label when empty.
NormSet load_norms(const std::vector<std::string>& lines,
                   const std::set<std::string>& valid_nationalities = {});
NormSet load_norms_file(const std::string& path,
                        const std::set<std::string>& valid_nationalities = {});

// Attaches each norm to every location whose type appears in the norm's
// location_types. `per_location_cap` (off by default) downsamples with rng.
void attach_norms(TownGraph& town, const NormSet& norms, Rng& rng,
                  std::optional<size_t> per_location_cap = std::nullopt);

// Norms in force for a target of the given nationality standing at `location`.
// Throws UnknownLocation for unknown ids.
std::vector<NormRecord> norms_for_target(const TownGraph& town, const NormSet& norms,
                                         const std::string& location_id,
                                         const std::string& nationality);

// ---- location actions --------------------------------------------------

struct ParamSpec {
    std::string name;
    std::string type;  // "string" | "integer" | "boolean"
    bool required = false;
};

struct DialogueSpec {
    std::string initiator_role;
    std::vector<std::string> responder_roles;  // "any" matches everyone
    bool multi_target_allowed = false;
};

struct LocationActionSpec {
    std::string id;  // e.g. "ORDER_FOOD"
    LocationType location_type = LocationType::Apartment;
    std::string role;  // "any" or a specific role holding the action
    std::vector<ParamSpec> parameters;
    bool triggers_dialogue = false;
    std::optional<DialogueSpec> dialogue;

    json to_json() const;
};

// The full built-in catalog (fixed; data-driven override is a non-goal).
const std::vector<LocationActionSpec>& action_catalog();

// Actions available at a location of type `t` to an agent holding `roles`
// ("any"-role actions are always included).
std::vector<LocationActionSpec> actions_for(LocationType t, const std::set<std::string>& roles);

const LocationActionSpec* find_action(LocationType t, const std::string& action_id);

// ---- placement and roles -------------------------------------------------

struct Assignment {
    std::map<std::string, std::string> home;  // agent id -> apartment id
    std::map<std::string, std::string> job;   // agent id -> workplace id

    json to_json() const;
    static Assignment from_json(const json& j);
};

// Households share one random apartment; employed agents draw a workplace
// uniformly among locations of their job location type. Fills
// initial_agent_ids (everyone starts the day at home). Throws NoApartment /
// NoLocationOfType when the town cannot host the population.
Assignment assign_homes_jobs(const population::Population& pop, TownGraph& town, Rng& rng);

// Roles an agent holds while standing at a location: employment role at their
// workplace, "resident" at home, visitor roles (customer/shopper/patient/
// gym_member/student/visitor) elsewhere by location type.
std::set<std::string> roles_at(const population::AgentProfile& agent,
                               const std::string& location_id, LocationType location_type,
                               const Assignment& assignment);

// Maps a relationship kind to the dialogue role it grants (friend ->
// "friend", neighbour -> "neighbor", family kinds -> "family_member").
std::optional<std::string> dialogue_role_for_relationship(const std::string& kind);

}  // namespace normtown::world
