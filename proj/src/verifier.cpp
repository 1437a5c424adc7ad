#include "normtown/verifier.hpp"

#include <algorithm>

#include "normtown/errors.hpp"
#include "normtown/policy.hpp"
#include "normtown/templates.hpp"

namespace normtown::verifier {

namespace {

std::optional<int> bit_of(const json& v) {
    if (v.is_boolean()) return v.get<bool>() ? 1 : 0;
    if (v.is_number()) return v.get<double>() != 0.0 ? 1 : 0;
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        if (s == "0" || s == "false") return 0;
        if (s == "1" || s == "true") return 1;
    }
    return std::nullopt;
}

std::optional<int> bit_field(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) return std::nullopt;
    return bit_of(*it);
}

json step_view(const engine::TrajectoryStep& s) {
    json dlg = json::array();
    for (const auto& d : s.dialogue)
        dlg.push_back(json{{"speaker", d.speaker}, {"utterance", d.utterance}});
    return json{{"step", s.step},
                {"time", format_clock(s.tau)},
                {"location", s.target_location},
                {"location_type", s.target_location_type},
                {"action", s.target_action},
                {"dialogue", dlg}};
}

std::string segment_json(const VerifierContext& ctx) {
    json arr = json::array();
    for (const auto* s : ctx.segment) arr.push_back(step_view(*s));
    return arr.dump();
}

std::string dialogue_json(const engine::TrajectoryStep& s) {
    json arr = json::array();
    for (const auto& d : s.dialogue)
        arr.push_back(json{{"speaker", d.speaker}, {"utterance", d.utterance}});
    return arr.dump();
}

std::string conversations_json(const engine::TrajectoryStep& s) {
    json arr = json::array();
    std::vector<std::string> order;
    std::map<std::string, json> grouped;
    for (const auto& d : s.dialogue) {
        if (!grouped.count(d.conversation_id)) {
            order.push_back(d.conversation_id);
            grouped[d.conversation_id] = json{{"conversation_id", d.conversation_id},
                                              {"location", d.location_id},
                                              {"participants", json::array()},
                                              {"turns", json::array()}};
        }
        auto& g = grouped[d.conversation_id];
        auto& parts = g["participants"];
        if (std::find(parts.begin(), parts.end(), json(d.speaker)) == parts.end())
            parts.push_back(d.speaker);
        g["turns"].push_back(json{{"speaker", d.speaker}, {"utterance", d.utterance}});
    }
    for (const auto& id : order) arr.push_back(grouped[id]);
    return arr.dump();
}

std::string completed_json(const VerifierContext& ctx) {
    return json(ctx.completed_subtask_ids).dump();
}

std::string ask(backend::Backend& judge, policy::TemplateId id,
                const std::vector<std::pair<std::string, std::string>>& values,
                const VerifierContext& ctx, const VerifierConfig& config) {
    auto prompt = policy::render_template(policy::get_template(id), values);
    backend::QueryHints hints{nullptr, &ctx};
    return judge.complete(prompt, config.options, &hints).text;
}

// Shared fields for the profile and coherence judges.
void put_progress_fields(std::vector<std::pair<std::string, std::string>>& values,
                         const VerifierContext& ctx) {
    values.emplace_back("target_profile", ctx.target->to_json().dump());
    values.emplace_back("goal", ctx.plan->goal_text);
    values.emplace_back("goal_plan", ctx.plan->to_json().dump());
    values.emplace_back("current_subtask", std::to_string(ctx.current_subtask_index));
    values.emplace_back("completed_count", std::to_string(ctx.completed_subtask_ids.size()));
    values.emplace_back("total_subtasks", std::to_string(ctx.plan->subtasks.size()));
    values.emplace_back("completed_subtasks", completed_json(ctx));
    values.emplace_back("log_excerpt", segment_json(ctx));
}

}  // namespace

std::string world_facts_line(const engine::TrajectoryStep& step,
                             const population::Population& pop) {
    std::string out = "At " + format_clock(step.tau) + " in " + step.target_location + " (" +
                      step.target_location_type + "). Present: ";
    if (step.visible.empty()) {
        out += "nobody else.";
        return out;
    }
    for (size_t i = 0; i < step.visible.size(); ++i) {
        if (i) out += ", ";
        const auto* p = pop.find(step.visible[i].id);
        out += (p ? p->name : step.visible[i].id) + " (" + step.visible[i].nationality + ")";
    }
    out += ".";
    return out;
}

GoalJudgment judge_goal(backend::Backend& judge, const VerifierContext& ctx,
                        const VerifierConfig& config) {
    GoalJudgment out;
    if (ctx.current_subtask_index < 0) return out;  // plan already finished
    std::vector<std::pair<std::string, std::string>> values{
        {"target_profile", ctx.target->to_json().dump()},
        {"goal_plan", ctx.plan->to_json().dump()},
        {"current_subtask", std::to_string(ctx.current_subtask_index)},
        {"completed_subtasks", completed_json(ctx)},
        {"segment_traj", segment_json(ctx)},
    };
    auto text = ask(judge, policy::TemplateId::VerifierGoal, values, ctx, config);
    auto j = policy::extract_json(text);
    if (!j || !j->is_object()) {
        ++out.parse_failures;
        return out;
    }
    auto bit = bit_field(*j, "done");
    if (!bit) {
        ++out.parse_failures;
        return out;
    }
    out.done = *bit;
    return out;
}

NormJudgment judge_norms(backend::Backend& judge, const VerifierContext& ctx,
                         const VerifierConfig& config) {
    NormJudgment out;
    if (ctx.norms_in_force.empty()) return out;  // violation rate is defined as 0 here

    const auto& step = *ctx.current;
    for (size_t start = 0; start < ctx.norms_in_force.size(); start += kNormBatchSize) {
        size_t end = std::min(start + static_cast<size_t>(kNormBatchSize),
                              ctx.norms_in_force.size());
        json norm_arr = json::array();
        for (size_t i = start; i < end; ++i)
            norm_arr.push_back(json{{"id", ctx.norms_in_force[i].id},
                                    {"text", ctx.norms_in_force[i].text}});
        std::vector<std::pair<std::string, std::string>> values{
            {"target_profile", ctx.target->to_json().dump()},
            {"target_action", step.target_action.dump()},
            {"dialogue", dialogue_json(step)},
            {"conversations", conversations_json(step)},
            {"world_facts", ctx.world_facts},
            {"norms", norm_arr.dump()},
        };
        auto text = ask(judge, policy::TemplateId::VerifierNorm, values, ctx, config);
        auto j = policy::extract_json(text);

        std::map<std::string, int> batch;  // violation bits
        for (size_t i = start; i < end; ++i) batch[ctx.norms_in_force[i].id] = -1;
        if (j && j->is_array()) {
            for (const auto& entry : *j) {
                if (!entry.is_object()) continue;
                std::string id = entry.value("id", "");
                auto it = batch.find(id);
                if (it == batch.end()) continue;
                if (auto violated = bit_field(entry, "violated")) it->second = *violated;
            }
        }
        for (auto& [id, v] : batch) {
            if (v < 0) {
                v = 0;  // unrecoverable verdict defaults to no violation
                ++out.parse_failures;
            }
            out.verdicts[id] = v;
        }
    }

    double sum = 0.0;
    for (const auto& [id, v] : out.verdicts) sum += v;
    out.violation = sum / static_cast<double>(ctx.norms_in_force.size());
    return out;
}

ProfileJudgment judge_profile(backend::Backend& judge, const VerifierContext& ctx,
                              const VerifierConfig& config) {
    ProfileJudgment out;
    if (!config.per_attribute_faithfulness) {
        std::vector<std::pair<std::string, std::string>> values;
        put_progress_fields(values, ctx);
        auto text = ask(judge, policy::TemplateId::VerifierProfile, values, ctx, config);
        auto j = policy::extract_json(text);
        auto bit = j && j->is_object() ? bit_field(*j, "n_hat") : std::nullopt;
        if (!bit) {
            ++out.parse_failures;
            return out;
        }
        out.score = *bit;
        return out;
    }

    std::vector<std::pair<std::string, std::string>> attributes{
        {"age", std::to_string(ctx.target->age)},
        {"gender", ctx.target->gender},
        {"nationality", ctx.target->nationality},
        {"occupation", ctx.target->occupation},
    };
    if (ctx.target->job_title) attributes.emplace_back("job title", *ctx.target->job_title);
    double sum = 0.0;
    for (const auto& [name, value] : attributes) {
        std::vector<std::pair<std::string, std::string>> values{{"attribute", name},
                                                                {"attribute_value", value}};
        put_progress_fields(values, ctx);
        auto text =
            ask(judge, policy::TemplateId::VerifierProfileAttribute, values, ctx, config);
        auto j = policy::extract_json(text);
        auto bit = j && j->is_object() ? bit_field(*j, "n_hat") : std::nullopt;
        if (!bit)
            ++out.parse_failures;
        else
            sum += *bit;
    }
    out.score = sum / static_cast<double>(attributes.size());
    return out;
}

CoherenceJudgment judge_coherence(backend::Backend& judge, const VerifierContext& ctx,
                                  const VerifierConfig& config) {
    CoherenceJudgment out;
    const auto& step = *ctx.current;
    std::vector<std::pair<std::string, std::string>> values;
    put_progress_fields(values, ctx);
    values.emplace_back("target_action", step.target_action.dump());
    values.emplace_back("dialogue", dialogue_json(step));
    values.emplace_back("conversations", conversations_json(step));
    values.emplace_back("world_facts", ctx.world_facts);
    auto text = ask(judge, policy::TemplateId::VerifierCoherence, values, ctx, config);
    auto j = policy::extract_json(text);
    if (!j || !j->is_object()) {
        out.parse_failures += 2;
        return out;
    }
    if (auto a = bit_field(*j, "a_hat"))
        out.a_hat = *a;
    else
        ++out.parse_failures;
    if (auto b = bit_field(*j, "b_hat"))
        out.b_hat = *b;
    else
        ++out.parse_failures;
    return out;
}

judgments::StepJudgment judge_step(backend::Backend& judge, const VerifierContext& ctx,
                                   const VerifierConfig& config) {
    judgments::StepJudgment out;
    out.step = ctx.current ? ctx.current->step : 0;
    const size_t total = ctx.plan->subtasks.size();
    out.g.assign(total, 0);
    std::map<std::string, size_t> index_of;
    for (size_t i = 0; i < total; ++i) index_of[ctx.plan->subtasks[i].id] = i;
    for (const auto& id : ctx.completed_subtask_ids) {
        auto it = index_of.find(id);
        if (it != index_of.end()) out.g[it->second] = 1;
    }

    auto goal = judge_goal(judge, ctx, config);
    out.parse_failures += goal.parse_failures;
    if (goal.done && ctx.current_subtask_index >= 0 &&
        ctx.current_subtask_index < static_cast<int>(total))
        out.g[static_cast<size_t>(ctx.current_subtask_index)] = 1;
    int done = 0;
    for (int bit : out.g) done += bit;
    out.goal_progress = total ? static_cast<double>(done) / static_cast<double>(total) : 0.0;

    auto norms = judge_norms(judge, ctx, config);
    out.norm_verdicts = std::move(norms.verdicts);
    out.norm_violation = norms.violation;
    out.parse_failures += norms.parse_failures;

    auto profile = judge_profile(judge, ctx, config);
    out.faithfulness = profile.score;
    out.parse_failures += profile.parse_failures;

    auto coherence = judge_coherence(judge, ctx, config);
    out.coherence = coherence.a_hat;
    out.context_awareness = coherence.b_hat;
    out.parse_failures += coherence.parse_failures;

    if (ctx.current) out.location_type = ctx.current->target_location_type;
    out.partner_nationalities = ctx.partner_nationalities;
    return out;
}

namespace {

std::vector<std::string> partner_nationalities_of(const engine::TrajectoryStep& rec,
                                                  const population::Population& pop) {
    std::vector<std::string> out;
    for (const auto& id : rec.partner_ids)
        if (const auto* p = pop.find(id)) out.push_back(p->nationality);
    return out;
}

}  // namespace

engine::StepJudge make_online_hook(backend::BackendPtr judge, VerifierConfig config) {
    auto segment = std::make_shared<std::vector<engine::TrajectoryStep>>();
    return [judge, config, segment](const engine::SimState& state,
                                    const engine::TrajectoryStep& rec) {
        segment->push_back(rec);
        VerifierContext ctx;
        ctx.target = &state.profile_of(state.target_id);
        ctx.plan = state.plan;
        ctx.current_subtask_index = state.current_subtask_index();
        for (size_t i = 0; i < state.theta.size(); ++i)
            if (state.theta[i]) ctx.completed_subtask_ids.push_back(state.plan->subtasks[i].id);
        for (const auto& s : *segment) ctx.segment.push_back(&s);
        ctx.current = &segment->back();
        for (const auto& id : rec.norm_ids_in_force)
            if (const auto* n = state.norms->find(id)) ctx.norms_in_force.push_back(*n);
        ctx.world_facts = world_facts_line(rec, *state.pop);
        ctx.partner_nationalities = partner_nationalities_of(rec, *state.pop);
        auto judgment = judge_step(*judge, ctx, config);
        if (ctx.current_subtask_index >= 0 &&
            judgment.g[static_cast<size_t>(ctx.current_subtask_index)] == 1)
            segment->clear();
        return judgment;
    };
}

std::vector<judgments::StepJudgment> verify_trajectory(backend::Backend& judge,
                                                       const engine::Trajectory& trajectory,
                                                       const population::Population& pop,
                                                       const world::NormSet& norms,
                                                       const goals::GoalPlan& plan,
                                                       const VerifierConfig& config) {
    const std::string target_id = trajectory.header.value("target_id", "");
    const auto* target = pop.find(target_id);
    if (!target) throw UnknownTarget("trajectory header names unknown target '" + target_id + "'");

    std::vector<judgments::StepJudgment> out;
    std::vector<int> theta(plan.subtasks.size(), 0);
    size_t segment_start = 0;
    for (size_t i = 0; i < trajectory.steps.size(); ++i) {
        const auto& rec = trajectory.steps[i];
        VerifierContext ctx;
        ctx.target = target;
        ctx.plan = &plan;
        ctx.current_subtask_index = -1;
        for (size_t k = 0; k < theta.size(); ++k) {
            if (theta[k])
                ctx.completed_subtask_ids.push_back(plan.subtasks[k].id);
            else if (ctx.current_subtask_index < 0)
                ctx.current_subtask_index = static_cast<int>(k);
        }
        for (size_t k = segment_start; k <= i; ++k) ctx.segment.push_back(&trajectory.steps[k]);
        ctx.current = &rec;
        for (const auto& id : rec.norm_ids_in_force)
            if (const auto* n = norms.find(id)) ctx.norms_in_force.push_back(*n);
        ctx.world_facts = world_facts_line(rec, pop);
        ctx.partner_nationalities = partner_nationalities_of(rec, pop);

        auto judgment = judge_step(judge, ctx, config);
        judgment.step = rec.step;
        for (size_t k = 0; k < theta.size() && k < judgment.g.size(); ++k)
            if (judgment.g[k]) theta[k] = 1;
        judgment.g.assign(theta.begin(), theta.end());
        int done = 0;
        for (int bit : theta) done += bit;
        judgment.goal_progress =
            theta.empty() ? 0.0 : static_cast<double>(done) / static_cast<double>(theta.size());
        if (ctx.current_subtask_index >= 0 && theta[static_cast<size_t>(ctx.current_subtask_index)])
            segment_start = i + 1;
        out.push_back(std::move(judgment));
    }
    return out;
}

}  // namespace normtown::verifier
