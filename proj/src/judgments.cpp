#include "normtown/judgments.hpp"

#include <algorithm>

#include "normtown/errors.hpp"

namespace normtown::judgments {

json StepJudgment::to_json() const {
    json verdicts = json::object();
    for (const auto& [id, v] : norm_verdicts) verdicts[id] = v;
    return json{{"step", step},
                {"g", g},
                {"goal_progress", goal_progress},
                {"norm_verdicts", verdicts},
                {"norm_violation", norm_violation},
                {"faithfulness", faithfulness},
                {"context_awareness", context_awareness},
                {"coherence", coherence},
                {"parse_failures", parse_failures},
                {"location_type", location_type},
                {"partner_nationalities", partner_nationalities}};
}

StepJudgment StepJudgment::from_json(const json& j) {
    StepJudgment s;
    s.step = j.value("step", 0);
    if (j.contains("g")) s.g = j.at("g").get<std::vector<int>>();
    s.goal_progress = j.value("goal_progress", 0.0);
    if (j.contains("norm_verdicts"))
        for (const auto& [k, v] : j.at("norm_verdicts").items())
            s.norm_verdicts[k] = v.get<int>();
    s.norm_violation = j.value("norm_violation", 0.0);
    s.faithfulness = j.value("faithfulness", 0.0);
    s.context_awareness = j.value("context_awareness", 0);
    s.coherence = j.value("coherence", 0);
    s.parse_failures = j.value("parse_failures", 0);
    s.location_type = j.value("location_type", "");
    if (j.contains("partner_nationalities"))
        s.partner_nationalities = j.at("partner_nationalities").get<std::vector<std::string>>();
    return s;
}

json MetricSlice::to_json() const {
    return json{{"steps", steps},
                {"norm_violation", norm_violation},
                {"norm_adherence", norm_adherence}};
}

MetricSlice MetricSlice::from_json(const json& j) {
    MetricSlice s;
    s.steps = j.value("steps", 0);
    s.norm_violation = j.value("norm_violation", 0.0);
    s.norm_adherence = j.value("norm_adherence", 0.0);
    return s;
}

namespace {

json slices_json(const std::map<std::string, MetricSlice>& slices) {
    json out = json::object();
    for (const auto& [k, v] : slices) out[k] = v.to_json();
    return out;
}

std::map<std::string, MetricSlice> slices_from_json(const json& j) {
    std::map<std::string, MetricSlice> out;
    for (const auto& [k, v] : j.items()) out[k] = MetricSlice::from_json(v);
    return out;
}

}  // namespace

json TrajectoryMetrics::to_json() const {
    return json{{"steps", steps},
                {"goal_completion", goal_completion},
                {"norm_violation", norm_violation},
                {"norm_adherence", norm_adherence},
                {"faithfulness", faithfulness},
                {"context_awareness", context_awareness},
                {"coherence", coherence},
                {"parse_failures", parse_failures},
                {"by_location", slices_json(by_location)},
                {"by_partner_nationality", slices_json(by_partner_nationality)}};
}

TrajectoryMetrics TrajectoryMetrics::from_json(const json& j) {
    TrajectoryMetrics m;
    m.steps = j.value("steps", 0);
    m.goal_completion = j.value("goal_completion", 0.0);
    m.norm_violation = j.value("norm_violation", 0.0);
    m.norm_adherence = j.value("norm_adherence", 0.0);
    m.faithfulness = j.value("faithfulness", 0.0);
    m.context_awareness = j.value("context_awareness", 0.0);
    m.coherence = j.value("coherence", 0.0);
    m.parse_failures = j.value("parse_failures", 0);
    if (j.contains("by_location")) m.by_location = slices_from_json(j.at("by_location"));
    if (j.contains("by_partner_nationality"))
        m.by_partner_nationality = slices_from_json(j.at("by_partner_nationality"));
    return m;
}

TrajectoryMetrics aggregate(const std::vector<StepJudgment>& judgments) {
    if (judgments.empty()) throw EmptyTrajectory("cannot aggregate zero judgments");
    TrajectoryMetrics m;
    m.steps = static_cast<int>(judgments.size());
    for (const auto& j : judgments) {
        m.norm_violation += j.norm_violation;
        m.faithfulness += j.faithfulness;
        m.context_awareness += j.context_awareness;
        m.coherence += j.coherence;
        m.parse_failures += j.parse_failures;
        if (!j.location_type.empty()) {
            auto& slice = m.by_location[j.location_type];
            ++slice.steps;
            slice.norm_violation += j.norm_violation;
        }
        std::vector<std::string> distinct = j.partner_nationalities;
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        for (const auto& nat : distinct) {
            auto& slice = m.by_partner_nationality[nat];
            ++slice.steps;
            slice.norm_violation += j.norm_violation;
        }
    }
    const double n = static_cast<double>(judgments.size());
    m.norm_violation /= n;
    m.norm_adherence = 1.0 - m.norm_violation;
    m.faithfulness /= n;
    m.context_awareness /= n;
    m.coherence /= n;
    m.goal_completion = judgments.back().goal_progress;
    auto finish = [](std::map<std::string, MetricSlice>& slices) {
        for (auto& [key, slice] : slices) {
            slice.norm_violation /= static_cast<double>(slice.steps);
            slice.norm_adherence = 1.0 - slice.norm_violation;
        }
    };
    finish(m.by_location);
    finish(m.by_partner_nationality);
    return m;
}

}  // namespace normtown::judgments
