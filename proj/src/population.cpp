#include "normtown/population.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "normtown/errors.hpp"

namespace normtown::population {

namespace {

constexpr int kAdultAge = 18;
constexpr int kMaxCoupleGap = 15;
constexpr int kMinParentGap = 18;
constexpr int kMaxParentGap = 45;
constexpr int kFailureBudget = 50;  // consecutive failed household draws

WeightTable parse_weight_table(const json& obj, const std::string& where) {
    if (!obj.is_object() || obj.empty())
        throw MalformedTable(where + ": expected a non-empty object of label -> weight");
    WeightTable t;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!it.value().is_number())
            throw MalformedTable(where + ": weight for '" + it.key() + "' is not a number");
        double w = it.value().get<double>();
        if (w < 0.0) throw MalformedTable(where + ": negative weight for '" + it.key() + "'");
        t.labels.push_back(it.key());
        t.weights.push_back(w);
    }
    if (t.total() <= 0.0) throw MalformedTable(where + ": weights sum to zero");
    return t;
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// Canonical household kind from a (possibly verbose) census label.
std::string household_kind_of(const std::string& label) {
    std::string l = lower(label);
    if (l.find("lone") != std::string::npos) return "lone";
    if (l.find("group") != std::string::npos) return "group";
    return "family";
}

struct Pool {
    std::vector<size_t> members;  // indices into the agent vector

    bool empty() const { return members.empty(); }
    size_t size() const { return members.size(); }

    size_t pick(Rng& rng) const { return members[rng.next_below(members.size())]; }

    void remove(size_t agent_index) {
        auto it = std::find(members.begin(), members.end(), agent_index);
        *it = members.back();
        members.pop_back();
    }

    template <typename Pred>
    std::vector<size_t> matching(Pred pred) const {
        std::vector<size_t> out;
        for (size_t idx : members)
            if (pred(idx)) out.push_back(idx);
        return out;
    }
};

void add_symmetric(std::vector<RelationshipEdge>& edges, const std::string& a,
                   const std::string& b, const std::string& kind) {
    edges.push_back({a, b, kind});
    edges.push_back({b, a, kind});
}

void add_inverse(std::vector<RelationshipEdge>& edges, const std::string& src,
                 const std::string& dst, const std::string& src_kind,
                 const std::string& dst_kind) {
    edges.push_back({src, dst, src_kind});
    edges.push_back({dst, src, dst_kind});
}

std::string parent_role(const AgentProfile& a) {
    if (a.gender == "Male") return "father";
    if (a.gender == "Female") return "mother";
    return "parent";
}

std::string child_role(const AgentProfile& a) {
    if (a.gender == "Male") return "son";
    if (a.gender == "Female") return "daughter";
    return "child";
}

}  // namespace

double WeightTable::total() const {
    double t = 0.0;
    for (double w : weights) t += w;
    return t;
}

std::vector<double> WeightTable::probabilities() const {
    double t = total();
    std::vector<double> p(weights.size());
    for (size_t i = 0; i < weights.size(); ++i) p[i] = weights[i] / t;
    return p;
}

size_t WeightTable::index_of(const std::string& label) const {
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return i;
    return static_cast<size_t>(-1);
}

std::string AgeBin::label() const {
    return std::to_string(lo) + "-" + std::to_string(hi);
}

const WeightTable* DemographicTables::location_probs_for(const std::string& occupation) const {
    for (const auto& [label, row] : occupation_location_probs)
        if (label == occupation) return &row;
    return nullptr;
}

const std::vector<std::string>* DemographicTables::titles_for(
    const std::string& location_type) const {
    for (const auto& [label, titles] : job_titles)
        if (label == location_type) return &titles;
    return nullptr;
}

const WeightTable* DemographicTables::names_for(const std::string& gender) const {
    for (const auto& [label, row] : name_table)
        if (label == gender) return &row;
    return nullptr;
}

DemographicTables load_demographics(const json& doc) {
    if (!doc.is_object()) throw MalformedTable("demographics: top level must be an object");
    DemographicTables t;

    if (!doc.contains("age_bins") || !doc["age_bins"].is_array() || doc["age_bins"].empty())
        throw MalformedTable("demographics: age_bins must be a non-empty array");
    double age_total = 0.0;
    for (const auto& b : doc["age_bins"]) {
        if (!b.is_object() || !b.contains("lo") || !b.contains("hi") || !b.contains("weight"))
            throw MalformedTable("demographics: age bins need lo, hi and weight");
        AgeBin bin;
        bin.lo = b.at("lo").get<int>();
        bin.hi = b.at("hi").get<int>();
        bin.weight = b.at("weight").get<double>();
        if (bin.lo > bin.hi)
            throw MalformedTable("demographics: age bin with lo > hi (" + bin.label() + ")");
        if (bin.weight < 0.0)
            throw MalformedTable("demographics: negative weight in age bin " + bin.label());
        age_total += bin.weight;
        t.age_bins.push_back(bin);
    }
    if (age_total <= 0.0) throw MalformedTable("demographics: age bin weights sum to zero");

    auto need = [&](const char* key) -> const json& {
        if (!doc.contains(key)) throw MalformedTable(std::string("demographics: missing ") + key);
        return doc[key];
    };
    t.gender = parse_weight_table(need("gender_weights"), "gender_weights");
    t.nationality = parse_weight_table(need("nationality_weights"), "nationality_weights");
    t.occupation = parse_weight_table(need("occupation_weights"), "occupation_weights");
    t.family_composition =
        parse_weight_table(need("family_composition_weights"), "family_composition_weights");
    t.household_composition =
        parse_weight_table(need("household_composition_weights"), "household_composition_weights");

    t.employment_rate = doc.value("employment_rate", 0.8);
    if (t.employment_rate < 0.0 || t.employment_rate > 1.0)
        throw MalformedTable("demographics: employment_rate outside [0, 1]");

    for (auto it = need("job_titles").begin(); it != need("job_titles").end(); ++it) {
        std::vector<std::string> titles;
        for (const auto& title : it.value()) titles.push_back(title.get<std::string>());
        if (titles.empty())
            throw MalformedTable("demographics: empty job title list for " + it.key());
        t.job_titles.emplace_back(it.key(), std::move(titles));
    }

    for (auto it = need("occupation_location_probs").begin();
         it != need("occupation_location_probs").end(); ++it) {
        WeightTable row = parse_weight_table(it.value(), "occupation_location_probs." + it.key());
        for (const auto& loc : row.labels)
            if (t.titles_for(loc) == nullptr)
                throw MalformedTable("demographics: occupation_location_probs." + it.key() +
                                     " points at '" + loc + "' which has no job titles");
        t.occupation_location_probs.emplace_back(it.key(), std::move(row));
    }
    for (const auto& occ : t.occupation.labels)
        if (t.location_probs_for(occ) == nullptr)
            throw MalformedTable("demographics: no occupation_location_probs row for '" + occ +
                                 "'");

    for (auto it = need("name_table").begin(); it != need("name_table").end(); ++it)
        t.name_table.emplace_back(it.key(), parse_weight_table(it.value(), "name_table." + it.key()));
    for (const auto& g : t.gender.labels)
        if (t.names_for(g) == nullptr)
            throw MalformedTable("demographics: no name_table row for gender '" + g + "'");

    return t;
}

DemographicTables load_demographics_file(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw MalformedTable("demographics: " + path + ": " + e.what());
    }
    return load_demographics(doc);
}

void assign_employment(const DemographicTables& tables, Rng& rng, AgentProfile& agent) {
    agent.job_title.reset();
    agent.job_location_type.reset();
    if (agent.age < 15) {
        agent.occupation = kStudentOccupation;
        agent.job_location_type = "School";
        return;
    }
    if (agent.age >= 65) {
        agent.occupation = kNotInLabourForce;
        return;
    }
    if (!rng.bernoulli(tables.employment_rate)) {
        agent.occupation = kNotInLabourForce;
        return;
    }
    size_t occ = rng.weighted_index(tables.occupation.weights);
    agent.occupation = tables.occupation.labels[occ];
    const WeightTable* locs = tables.location_probs_for(agent.occupation);
    size_t loc = rng.weighted_index(locs->weights);
    agent.job_location_type = locs->labels[loc];
    const auto* titles = tables.titles_for(*agent.job_location_type);
    agent.job_title = (*titles)[rng.next_below(titles->size())];
}

AgentProfile sample_profile(const DemographicTables& tables, Rng& rng, const std::string& id) {
    AgentProfile a;
    a.id = id;
    std::vector<double> bin_weights;
    bin_weights.reserve(tables.age_bins.size());
    for (const auto& b : tables.age_bins) bin_weights.push_back(b.weight);
    const AgeBin& bin = tables.age_bins[rng.weighted_index(bin_weights)];
    a.age = static_cast<int>(rng.uniform_int(bin.lo, bin.hi));
    a.age_bin = bin.label();
    a.gender = tables.gender.labels[rng.weighted_index(tables.gender.weights)];
    const WeightTable* names = tables.names_for(a.gender);
    a.name = names->labels[rng.weighted_index(names->weights)];
    a.nationality = tables.nationality.labels[rng.weighted_index(tables.nationality.weights)];
    assign_employment(tables, rng, a);
    return a;
}

HouseholdBuild build_households(std::vector<AgentProfile>& agents, const DemographicTables& tables,
                                Rng& rng) {
    HouseholdBuild out;
    Pool pool;
    pool.members.resize(agents.size());
    for (size_t i = 0; i < agents.size(); ++i) pool.members[i] = i;

    auto next_household_id = [&] { return "hh_" + zero_pad(out.households.size(), 6); };

    auto make_household = [&](const std::string& kind, std::optional<std::string> composition,
                              const std::vector<size_t>& members,
                              const std::vector<std::string>& roles) {
        Household h;
        h.id = next_household_id();
        h.kind = kind;
        h.composition = std::move(composition);
        for (size_t i = 0; i < members.size(); ++i) {
            agents[members[i]].household_id = h.id;
            agents[members[i]].family_role = roles[i];
            h.member_ids.push_back(agents[members[i]].id);
            pool.remove(members[i]);
        }
        std::sort(h.member_ids.begin(), h.member_ids.end());
        out.households.push_back(std::move(h));
    };

    auto make_lone = [&](size_t idx) { make_household("lone", std::nullopt, {idx}, {"lone"}); };

    // Search for a partner for `anchor`: differing gender label, both adults,
    // age gap within the couple limit, optionally also old enough to parent
    // a child of age `child_age`.
    auto find_partner = [&](size_t anchor, int child_age) -> std::vector<size_t> {
        const AgentProfile& a = agents[anchor];
        return pool.matching([&](size_t idx) {
            if (idx == anchor) return false;
            const AgentProfile& b = agents[idx];
            if (b.age < kAdultAge || b.gender == a.gender) return false;
            if (std::abs(b.age - a.age) > kMaxCoupleGap) return false;
            if (child_age >= 0 &&
                (b.age - child_age < kMinParentGap || b.age - child_age > kMaxParentGap))
                return false;
            return true;
        });
    };

    auto children_window = [&](int min_parent_age, int max_parent_age) {
        // Every child must keep the parent gap in [18, 45] for *both* parents.
        return pool.matching([&](size_t idx) {
            int age = agents[idx].age;
            return max_parent_age - age <= kMaxParentGap && min_parent_age - age >= kMinParentGap;
        });
    };

    auto take_random = [&](std::vector<size_t>& candidates) {
        size_t pos = rng.next_below(candidates.size());
        size_t idx = candidates[pos];
        candidates[pos] = candidates.back();
        candidates.pop_back();
        return idx;
    };

    int consecutive_failures = 0;
    while (!pool.empty()) {
        if (pool.size() == 1) {
            make_lone(pool.members[0]);
            break;
        }
        if (consecutive_failures >= kFailureBudget) {
            // The remaining pool cannot satisfy any sampled composition
            // (e.g. only same-gender adults are left); place everyone alone.
            out.demoted_to_lone = static_cast<int>(pool.size());
            while (!pool.empty()) make_lone(pool.members[0]);
            break;
        }

        const std::string kind = household_kind_of(
            tables.household_composition
                .labels[rng.weighted_index(tables.household_composition.weights)]);

        if (kind == "lone") {
            make_lone(pool.pick(rng));
            consecutive_failures = 0;
            continue;
        }

        if (kind == "group") {
            size_t size = static_cast<size_t>(
                rng.uniform_int(2, static_cast<int64_t>(std::min<size_t>(4, pool.size()))));
            std::vector<size_t> members;
            std::vector<size_t> candidates = pool.members;
            for (size_t i = 0; i < size; ++i) members.push_back(take_random(candidates));
            std::vector<std::string> roles(members.size(), "housemate");
            for (size_t i = 0; i < members.size(); ++i)
                for (size_t j = i + 1; j < members.size(); ++j)
                    add_symmetric(out.edges, agents[members[i]].id, agents[members[j]].id,
                                  "housemate");
            make_household("group", std::nullopt, members, roles);
            consecutive_failures = 0;
            continue;
        }

        // Family household.
        const std::string composition =
            tables.family_composition
                .labels[rng.weighted_index(tables.family_composition.weights)];
        const std::string comp_l = lower(composition);
        const bool wants_children = comp_l.find("children") != std::string::npos &&
                                    comp_l.find("without") == std::string::npos;
        const bool one_parent = comp_l.find("one parent") != std::string::npos;
        const bool other_family = comp_l.find("other") != std::string::npos;
        bool built = false;

        if (other_family) {
            std::vector<size_t> adults =
                pool.matching([&](size_t idx) { return agents[idx].age >= kAdultAge; });
            if (adults.size() >= 2) {
                size_t size = static_cast<size_t>(
                    rng.uniform_int(2, static_cast<int64_t>(std::min<size_t>(4, adults.size()))));
                std::vector<size_t> members;
                for (size_t i = 0; i < size; ++i) members.push_back(take_random(adults));
                for (size_t i = 0; i < members.size(); ++i)
                    for (size_t j = i + 1; j < members.size(); ++j)
                        add_symmetric(out.edges, agents[members[i]].id, agents[members[j]].id,
                                      "relative");
                make_household("family", composition, members,
                               std::vector<std::string>(members.size(), "relative"));
                built = true;
            }
        } else if (one_parent) {
            // Child-first: a random child anchor always admits some parent
            // window, where parent-first would often dead-end on young pools.
            std::vector<size_t> child_candidates = pool.members;
            for (int attempt = 0; attempt < 20 && !child_candidates.empty() && !built; ++attempt) {
                size_t child = take_random(child_candidates);
                std::vector<size_t> parents = pool.matching([&](size_t idx) {
                    if (idx == child) return false;
                    int gap = agents[idx].age - agents[child].age;
                    return gap >= kMinParentGap && gap <= kMaxParentGap;
                });
                if (parents.empty()) continue;
                size_t parent = parents[rng.next_below(parents.size())];
                int desired = static_cast<int>(rng.uniform_int(1, 3));
                std::vector<size_t> members{parent, child};
                std::vector<std::string> roles{parent_role(agents[parent]),
                                               child_role(agents[child])};
                if (desired > 1) {
                    std::vector<size_t> extra =
                        children_window(agents[parent].age, agents[parent].age);
                    std::erase(extra, child);
                    std::erase(extra, parent);
                    while (static_cast<int>(members.size()) - 1 < desired && !extra.empty()) {
                        size_t sibling = take_random(extra);
                        members.push_back(sibling);
                        roles.push_back(child_role(agents[sibling]));
                    }
                }
                for (size_t i = 1; i < members.size(); ++i)
                    add_inverse(out.edges, agents[parent].id, agents[members[i]].id, "parent",
                                "child");
                for (size_t i = 1; i < members.size(); ++i)
                    for (size_t j = i + 1; j < members.size(); ++j)
                        add_symmetric(out.edges, agents[members[i]].id, agents[members[j]].id,
                                      "sibling");
                make_household("family", composition, members, roles);
                built = true;
            }
        } else if (wants_children) {
            std::vector<size_t> child_candidates = pool.members;
            for (int attempt = 0; attempt < 20 && !child_candidates.empty() && !built; ++attempt) {
                size_t child = take_random(child_candidates);
                int child_age = agents[child].age;
                std::vector<size_t> first_parents = pool.matching([&](size_t idx) {
                    if (idx == child) return false;
                    const AgentProfile& p = agents[idx];
                    int gap = p.age - child_age;
                    return p.age >= kAdultAge && gap >= kMinParentGap && gap <= kMaxParentGap;
                });
                for (int ptry = 0; ptry < 10 && !first_parents.empty() && !built; ++ptry) {
                    size_t p1 = take_random(first_parents);
                    std::vector<size_t> partners = find_partner(p1, child_age);
                    std::erase(partners, child);
                    if (partners.empty()) continue;
                    size_t p2 = partners[rng.next_below(partners.size())];
                    int desired = static_cast<int>(rng.uniform_int(1, 3));
                    std::vector<size_t> members{p1, p2, child};
                    std::vector<std::string> roles{parent_role(agents[p1]),
                                                   parent_role(agents[p2]),
                                                   child_role(agents[child])};
                    if (desired > 1) {
                        std::vector<size_t> extra =
                            children_window(std::min(agents[p1].age, agents[p2].age),
                                            std::max(agents[p1].age, agents[p2].age));
                        std::erase(extra, child);
                        std::erase(extra, p1);
                        std::erase(extra, p2);
                        while (static_cast<int>(members.size()) - 2 < desired && !extra.empty()) {
                            size_t sibling = take_random(extra);
                            members.push_back(sibling);
                            roles.push_back(child_role(agents[sibling]));
                        }
                    }
                    add_symmetric(out.edges, agents[p1].id, agents[p2].id, "spouse");
                    for (size_t i = 2; i < members.size(); ++i) {
                        add_inverse(out.edges, agents[p1].id, agents[members[i]].id, "parent",
                                    "child");
                        add_inverse(out.edges, agents[p2].id, agents[members[i]].id, "parent",
                                    "child");
                    }
                    for (size_t i = 2; i < members.size(); ++i)
                        for (size_t j = i + 1; j < members.size(); ++j)
                            add_symmetric(out.edges, agents[members[i]].id, agents[members[j]].id,
                                          "sibling");
                    make_household("family", composition, members, roles);
                    built = true;
                }
            }
        } else {
            // Couple without children.
            std::vector<size_t> anchors =
                pool.matching([&](size_t idx) { return agents[idx].age >= kAdultAge; });
            for (int attempt = 0; attempt < 20 && !anchors.empty() && !built; ++attempt) {
                size_t anchor = take_random(anchors);
                std::vector<size_t> partners = find_partner(anchor, -1);
                if (partners.empty()) continue;
                size_t partner = partners[rng.next_below(partners.size())];
                add_symmetric(out.edges, agents[anchor].id, agents[partner].id, "spouse");
                make_household("family", composition, {anchor, partner}, {"partner", "partner"});
                built = true;
            }
        }

        if (built)
            consecutive_failures = 0;
        else
            ++consecutive_failures;
    }
    return out;
}

bool title_matches_manager(const std::string& title) {
    std::string l = lower(title);
    return l.find("manager") != std::string::npos || l.find("principal") != std::string::npos ||
           l.find("head") != std::string::npos;
}

std::vector<RelationshipEdge> build_institution_ties(const std::vector<AgentProfile>& agents,
                                                     int unit_size) {
    std::map<std::string, std::vector<size_t>> by_type;  // ordered, id order inside
    for (size_t i = 0; i < agents.size(); ++i)
        if (agents[i].job_location_type) by_type[*agents[i].job_location_type].push_back(i);

    std::vector<RelationshipEdge> edges;
    for (const auto& [type, members] : by_type) {
        for (size_t start = 0; start < members.size(); start += static_cast<size_t>(unit_size)) {
            size_t end = std::min(members.size(), start + static_cast<size_t>(unit_size));
            std::vector<size_t> students, staff;
            for (size_t k = start; k < end; ++k) {
                if (agents[members[k]].occupation == kStudentOccupation)
                    students.push_back(members[k]);
                else
                    staff.push_back(members[k]);
            }
            for (size_t i = 0; i < students.size(); ++i)
                for (size_t j = i + 1; j < students.size(); ++j)
                    add_symmetric(edges, agents[students[i]].id, agents[students[j]].id,
                                  "classmate");
            for (size_t s : staff)
                for (size_t st : students)
                    add_inverse(edges, agents[s].id, agents[st].id, "teacher", "student");

            std::vector<size_t> managers;
            for (size_t s : staff)
                if (agents[s].job_title && title_matches_manager(*agents[s].job_title))
                    managers.push_back(s);
            const bool single_manager = managers.size() == 1;
            for (size_t i = 0; i < staff.size(); ++i) {
                for (size_t j = i + 1; j < staff.size(); ++j) {
                    if (single_manager && (staff[i] == managers[0] || staff[j] == managers[0])) {
                        size_t mgr = managers[0];
                        size_t sub = staff[i] == mgr ? staff[j] : staff[i];
                        add_inverse(edges, agents[mgr].id, agents[sub].id, "manager",
                                    "subordinate");
                    } else {
                        add_symmetric(edges, agents[staff[i]].id, agents[staff[j]].id,
                                      "colleague");
                    }
                }
            }
        }
    }
    return edges;
}

std::vector<RelationshipEdge> add_background_ties(const std::vector<AgentProfile>& agents,
                                                  size_t count, Rng& rng) {
    std::vector<RelationshipEdge> edges;
    if (agents.size() < 2 || count == 0) return edges;
    static const char* kinds[] = {"friend", "neighbour", "stranger"};
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    size_t added = 0;
    size_t attempts = 0;
    const size_t max_attempts = count * 100 + 1000;
    while (added < count && attempts < max_attempts) {
        ++attempts;
        size_t i = rng.next_below(agents.size());
        size_t j = rng.next_below(agents.size());
        if (i == j) continue;
        const std::string& kind = kinds[rng.next_below(3)];
        const std::string& lo_id = std::min(agents[i].id, agents[j].id);
        const std::string& hi_id = std::max(agents[i].id, agents[j].id);
        if (!seen.insert({lo_id, hi_id, kind}).second) continue;
        add_symmetric(edges, agents[i].id, agents[j].id, kind);
        ++added;
    }
    return edges;
}

Population sample_population(size_t n, const DemographicTables& tables, uint64_t seed,
                             const PopulationConfig& config) {
    Population pop;
    pop.seed = seed;
    Rng root(seed);

    Rng rng_profiles = root.split("profiles");
    pop.agents.reserve(n);
    for (size_t i = 0; i < n; ++i)
        pop.agents.push_back(sample_profile(tables, rng_profiles, "agent_" + zero_pad(i, 6)));

    Rng rng_households = root.split("households");
    HouseholdBuild hb = build_households(pop.agents, tables, rng_households);
    pop.households = std::move(hb.households);
    pop.relationships = std::move(hb.edges);

    std::vector<RelationshipEdge> inst = build_institution_ties(pop.agents, config.unit_size);
    pop.relationships.insert(pop.relationships.end(), inst.begin(), inst.end());

    Rng rng_background = root.split("background");
    size_t ties = static_cast<size_t>(std::ceil(config.background_tie_fraction * double(n)));
    std::vector<RelationshipEdge> bg = add_background_ties(pop.agents, ties, rng_background);
    pop.relationships.insert(pop.relationships.end(), bg.begin(), bg.end());

    std::sort(pop.relationships.begin(), pop.relationships.end(),
              [](const RelationshipEdge& a, const RelationshipEdge& b) {
                  return std::tie(a.src, a.dst, a.kind) < std::tie(b.src, b.dst, b.kind);
              });
    std::sort(pop.households.begin(), pop.households.end(),
              [](const Household& a, const Household& b) { return a.id < b.id; });
    return pop;
}

const AgentProfile* Population::find(const std::string& agent_id) const {
    auto it = std::lower_bound(agents.begin(), agents.end(), agent_id,
                               [](const AgentProfile& a, const std::string& id) { return a.id < id; });
    if (it != agents.end() && it->id == agent_id) return &*it;
    return nullptr;
}

json AgentProfile::to_json() const {
    json j;
    j["id"] = id;
    j["name"] = name;
    j["age"] = age;
    j["age_bin"] = age_bin;
    j["gender"] = gender;
    j["nationality"] = nationality;
    j["occupation"] = occupation;
    if (job_title) j["job_title"] = *job_title;
    if (job_location_type) j["job_location_type"] = *job_location_type;
    j["family_role"] = family_role;
    j["household_id"] = household_id;
    return j;
}

AgentProfile AgentProfile::from_json(const json& j) {
    AgentProfile a;
    a.id = j.at("id").get<std::string>();
    a.name = j.at("name").get<std::string>();
    a.age = j.at("age").get<int>();
    a.age_bin = j.at("age_bin").get<std::string>();
    a.gender = j.at("gender").get<std::string>();
    a.nationality = j.at("nationality").get<std::string>();
    a.occupation = j.at("occupation").get<std::string>();
    if (j.contains("job_title")) a.job_title = j["job_title"].get<std::string>();
    if (j.contains("job_location_type"))
        a.job_location_type = j["job_location_type"].get<std::string>();
    a.family_role = j.value("family_role", "");
    a.household_id = j.value("household_id", "");
    return a;
}

json Population::to_json() const {
    json j;
    j["seed"] = seed;
    j["agents"] = json::array();
    for (const auto& a : agents) j["agents"].push_back(a.to_json());
    j["households"] = json::array();
    for (const auto& h : households) {
        json hj;
        hj["id"] = h.id;
        hj["kind"] = h.kind;
        if (h.composition) hj["composition"] = *h.composition;
        hj["members"] = h.member_ids;
        j["households"].push_back(std::move(hj));
    }
    j["relationships"] = json::array();
    for (const auto& e : relationships)
        j["relationships"].push_back(json{{"src", e.src}, {"dst", e.dst}, {"kind", e.kind}});
    return j;
}

Population Population::from_json(const json& j) {
    Population p;
    p.seed = j.value("seed", 0ULL);
    for (const auto& aj : j.at("agents")) p.agents.push_back(AgentProfile::from_json(aj));
    for (const auto& hj : j.at("households")) {
        Household h;
        h.id = hj.at("id").get<std::string>();
        h.kind = hj.at("kind").get<std::string>();
        if (hj.contains("composition")) h.composition = hj["composition"].get<std::string>();
        for (const auto& m : hj.at("members")) h.member_ids.push_back(m.get<std::string>());
        p.households.push_back(std::move(h));
    }
    for (const auto& ej : j.at("relationships"))
        p.relationships.push_back({ej.at("src").get<std::string>(),
                                   ej.at("dst").get<std::string>(),
                                   ej.at("kind").get<std::string>()});
    return p;
}

}  // namespace normtown::population
