#include "normtown/report.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "normtown/errors.hpp"

namespace normtown::report {

json StepSummary::to_json() const {
    return json{{"step", step},
                {"location_type", location_type},
                {"partner_nationalities", partner_nationalities},
                {"norm_violation", norm_violation},
                {"goal_progress", goal_progress},
                {"faithfulness", faithfulness},
                {"context_awareness", context_awareness},
                {"coherence", coherence}};
}

StepSummary StepSummary::from_json(const json& j) {
    StepSummary s;
    s.step = j.value("step", 0);
    s.location_type = j.value("location_type", "");
    if (j.contains("partner_nationalities"))
        s.partner_nationalities = j.at("partner_nationalities").get<std::vector<std::string>>();
    s.norm_violation = j.value("norm_violation", 0.0);
    s.goal_progress = j.value("goal_progress", 0.0);
    s.faithfulness = j.value("faithfulness", 0.0);
    s.context_awareness = j.value("context_awareness", 0);
    s.coherence = j.value("coherence", 0);
    return s;
}

json RunResult::to_json() const {
    json steps_arr = json::array();
    for (const auto& s : steps) steps_arr.push_back(s.to_json());
    return json{{"target_id", target_id},
                {"target_nationality", target_nationality},
                {"seed", seed},
                {"config_hash", config_hash},
                {"metrics", metrics.to_json()},
                {"steps", steps_arr}};
}

RunResult RunResult::from_json(const json& j) {
    RunResult r;
    r.target_id = j.value("target_id", "");
    r.target_nationality = j.value("target_nationality", "");
    r.seed = j.value("seed", uint64_t{0});
    r.config_hash = j.value("config_hash", "");
    if (j.contains("metrics"))
        r.metrics = judgments::TrajectoryMetrics::from_json(j.at("metrics"));
    if (j.contains("steps"))
        for (const auto& s : j.at("steps")) r.steps.push_back(StepSummary::from_json(s));
    return r;
}

RunResult make_run_result(const json& trajectory_header,
                          const std::vector<judgments::StepJudgment>& judgments,
                          const population::Population& pop) {
    RunResult r;
    r.target_id = trajectory_header.value("target_id", "");
    const auto* target = pop.find(r.target_id);
    if (!target) throw UnknownTarget("run header names unknown target '" + r.target_id + "'");
    r.target_nationality = target->nationality;
    r.seed = trajectory_header.value("seed", uint64_t{0});
    r.config_hash = trajectory_header.value("config_hash", "");
    r.metrics = judgments::aggregate(judgments);
    for (const auto& j : judgments) {
        StepSummary s;
        s.step = j.step;
        s.location_type = j.location_type;
        s.partner_nationalities = j.partner_nationalities;
        s.norm_violation = j.norm_violation;
        s.goal_progress = j.goal_progress;
        s.faithfulness = j.faithfulness;
        s.context_awareness = j.context_awareness;
        s.coherence = j.coherence;
        r.steps.push_back(std::move(s));
    }
    return r;
}

int culture_count(const RunResult& run, bool include_target) {
    std::set<std::string> cultures;
    bool interacted = false;
    for (const auto& s : run.steps)
        for (const auto& nat : s.partner_nationalities) {
            cultures.insert(nat);
            interacted = true;
        }
    if (!interacted) return 0;
    if (include_target) cultures.insert(run.target_nationality);
    return static_cast<int>(cultures.size());
}

std::string culture_bucket(int count) {
    return count == 0 ? "solitary" : std::to_string(count);
}

std::string to_string(GroupKey key) {
    switch (key) {
        case GroupKey::nationality: return "nationality";
        case GroupKey::location: return "location";
        case GroupKey::culture_count: return "culture_count";
    }
    return "nationality";
}

GroupKey group_key_from(const std::string& name) {
    if (name == "nationality") return GroupKey::nationality;
    if (name == "location") return GroupKey::location;
    if (name == "culture_count") return GroupKey::culture_count;
    throw MissingField("unknown group key '" + name +
                       "' (expected nationality, location, or culture_count)");
}

json GroupRow::to_json() const {
    return json{{"group", group},
                {"n", n},
                {"norm_adherence", norm_adherence},
                {"goal_completion", goal_completion},
                {"faithfulness", faithfulness},
                {"context_awareness", context_awareness},
                {"coherence", coherence}};
}

GroupRow GroupRow::from_json(const json& j) {
    GroupRow r;
    r.group = j.value("group", "");
    r.n = j.value("n", 0);
    r.norm_adherence = j.value("norm_adherence", 0.0);
    r.goal_completion = j.value("goal_completion", 0.0);
    r.faithfulness = j.value("faithfulness", 0.0);
    r.context_awareness = j.value("context_awareness", 0.0);
    r.coherence = j.value("coherence", 0.0);
    return r;
}

json GroupedReport::to_json() const {
    json rows_arr = json::array();
    for (const auto& r : rows) rows_arr.push_back(r.to_json());
    return json{{"group_key", to_string(key)}, {"rows", rows_arr}};
}

GroupedReport GroupedReport::from_json(const json& j) {
    GroupedReport g;
    g.key = group_key_from(j.value("group_key", "nationality"));
    if (j.contains("rows"))
        for (const auto& r : j.at("rows")) g.rows.push_back(GroupRow::from_json(r));
    return g;
}

namespace {

struct Accumulator {
    int n = 0;
    double violation = 0.0;
    double goal = 0.0;
    double faithfulness = 0.0;
    double context = 0.0;
    double coherence = 0.0;
};

GroupRow finish(const std::string& label, const Accumulator& a) {
    GroupRow row;
    row.group = label;
    row.n = a.n;
    const double n = static_cast<double>(a.n);
    row.norm_adherence = 1.0 - a.violation / n;
    row.goal_completion = a.goal / n;
    row.faithfulness = a.faithfulness / n;
    row.context_awareness = a.context / n;
    row.coherence = a.coherence / n;
    return row;
}

}  // namespace

GroupedReport group_by(const std::vector<RunResult>& results, GroupKey key,
                       bool include_target_nationality) {
    if (results.empty()) throw EmptyResults("group_by needs at least one run");
    GroupedReport out;
    out.key = key;
    std::map<std::string, Accumulator> groups;

    if (key == GroupKey::location) {
        for (const auto& run : results)
            for (const auto& s : run.steps) {
                if (s.location_type.empty()) continue;
                auto& a = groups[s.location_type];
                ++a.n;
                a.violation += s.norm_violation;
                a.goal += s.goal_progress;
                a.faithfulness += s.faithfulness;
                a.context += s.context_awareness;
                a.coherence += s.coherence;
            }
    } else {
        for (const auto& run : results) {
            const std::string label =
                key == GroupKey::nationality
                    ? run.target_nationality
                    : culture_bucket(culture_count(run, include_target_nationality));
            auto& a = groups[label];
            ++a.n;
            a.violation += run.metrics.norm_violation;
            a.goal += run.metrics.goal_completion;
            a.faithfulness += run.metrics.faithfulness;
            a.context += run.metrics.context_awareness;
            a.coherence += run.metrics.coherence;
        }
    }

    for (const auto& [label, acc] : groups) out.rows.push_back(finish(label, acc));
    return out;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace

std::string render_report(const GroupedReport& report, const std::string& format) {
    if (format == "json") return report.to_json().dump(2) + "\n";
    if (format != "csv") throw MissingField("unknown report format '" + format + "'");
    std::string out =
        "group_key,group,n,norm_adherence,goal_completion,faithfulness,"
        "context_awareness,coherence\n";
    for (const auto& r : report.rows) {
        out += csv_field(to_string(report.key)) + "," + csv_field(r.group) + "," +
               std::to_string(r.n) + "," + fixed4(r.norm_adherence) + "," +
               fixed4(r.goal_completion) + "," + fixed4(r.faithfulness) + "," +
               fixed4(r.context_awareness) + "," + fixed4(r.coherence) + "\n";
    }
    return out;
}

void emit_report(const GroupedReport& report, const std::string& format,
                 const std::string& path) {
    write_file(path, render_report(report, format));
}

std::string render_conformal_report(const std::vector<ConformalRow>& rows,
                                    const std::string& format) {
    if (format == "json") {
        json arr = json::array();
        for (const auto& r : rows)
            arr.push_back(json{{"task", r.task},
                               {"epsilon", r.epsilon},
                               {"empirical_risk", r.eval.empirical_risk},
                               {"mean_set_size", r.eval.mean_set_size},
                               {"mean_draws", r.eval.mean_draws},
                               {"n", r.eval.n},
                               {"config", r.config.to_json()}});
        return arr.dump(2) + "\n";
    }
    if (format != "csv") throw MissingField("unknown report format '" + format + "'");
    std::string out = "task,epsilon,empirical_risk,mean_set_size,mean_draws,config\n";
    for (const auto& r : rows) {
        out += csv_field(r.task) + "," + fixed4(r.epsilon) + "," +
               fixed4(r.eval.empirical_risk) + "," + fixed4(r.eval.mean_set_size) + "," +
               fixed4(r.eval.mean_draws) + "," + csv_field(r.config.to_json().dump()) + "\n";
    }
    return out;
}

void emit_conformal_report(const std::vector<ConformalRow>& rows, const std::string& format,
                           const std::string& path) {
    write_file(path, render_conformal_report(rows, format));
}

}  // namespace normtown::report
