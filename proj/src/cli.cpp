#include "normtown/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <ostream>

#include "CLI11.hpp"
#include "normtown/conformal.hpp"
#include "normtown/engine.hpp"
#include "normtown/errors.hpp"
#include "normtown/goals.hpp"
#include "normtown/judgments.hpp"
#include "normtown/policy.hpp"
#include "normtown/population.hpp"
#include "normtown/report.hpp"
#include "normtown/scripted.hpp"
#include "normtown/templates.hpp"
#include "normtown/verifier.hpp"
#include "normtown/world.hpp"

#ifndef NORMTOWN_DATA_DIR
#define NORMTOWN_DATA_DIR "data"
#endif

namespace normtown::cli {

namespace {

namespace fs = std::filesystem;

std::string data_file(const char* name) {
    return std::string(NORMTOWN_DATA_DIR) + "/" + name;
}

json load_json_file(const std::string& path) { return json::parse(read_file(path)); }

void write_json_file(const std::string& path, const json& doc) {
    write_file(path, doc.dump(2) + "\n");
}

// town.json bundles the graph, the home/job assignment, and the norm records
// so downstream commands need exactly one file.
struct TownBundle {
    world::TownGraph town;
    world::Assignment assignment;
    world::NormSet norms;
};

json norm_records_json(const world::NormSet& norms) {
    json arr = json::array();
    for (const auto& n : norms.records) {
        json types = json::array();
        for (auto t : n.location_types) types.push_back(world::to_string(t));
        arr.push_back(json{{"id", n.id},
                           {"text", n.text},
                           {"nationality", n.nationality},
                           {"location_types", types}});
    }
    return arr;
}

TownBundle load_town_bundle(const std::string& path) {
    json doc = load_json_file(path);
    TownBundle b;
    b.town = world::TownGraph::from_json(doc.at("town"));
    b.assignment = world::Assignment::from_json(doc.at("assignment"));
    std::vector<std::string> lines;
    for (const auto& rec : doc.at("norms")) lines.push_back(rec.dump());
    b.norms = world::load_norms(lines);
    return b;
}

std::vector<std::string> resolve_targets(const population::Population& pop,
                                         const std::string& selector) {
    std::vector<std::string> out;
    if (selector == "all") {
        for (const auto& a : pop.agents) out.push_back(a.id);
        return out;
    }
    if (!pop.find(selector)) throw UnknownTarget("no agent with id '" + selector + "'");
    out.push_back(selector);
    return out;
}

goals::GoalPlan plan_for(const json& plans_doc, const std::string& target_id) {
    const auto& plans = plans_doc.at("plans");
    auto it = plans.find(target_id);
    if (it == plans.end()) throw UnknownTarget("no plan for target '" + target_id + "'");
    return goals::GoalPlan::from_json(*it);
}

uint64_t parse_u64(const std::string& s, const std::string& what) {
    try {
        size_t pos = 0;
        uint64_t v = std::stoull(s, &pos);
        if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw BadBackendSpec("bad " + what + " '" + s + "' in backend spec");
}

double parse_prob(const std::string& s, const std::string& what) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos == s.size() && v >= 0.0 && v <= 1.0) return v;
    } catch (const std::exception&) {
    }
    throw BadBackendSpec("bad " + what + " '" + s + "' in backend spec (want a value in [0,1])");
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> parts;
    size_t start = 0;
    while (true) {
        size_t at = s.find(sep, start);
        if (at == std::string::npos) {
            parts.push_back(s.substr(start));
            return parts;
        }
        parts.push_back(s.substr(start, at - start));
        start = at + 1;
    }
}

backend::BackendPtr make_scripted(const std::string& rest, const world::TownGraph* town,
                                  uint64_t seed) {
    auto parts = split_on(rest, ':');
    const std::string& name = parts[0];
    if (name == "goal_seeker") {
        if (!town) throw BadBackendSpec("scripted:goal_seeker needs a town (pass --town)");
        return scripted::goal_seeker(*town);
    }
    if (name == "chatter") return scripted::chatter();
    if (name == "random")
        return scripted::random_agent(parts.size() > 1 ? parse_u64(parts[1], "seed") : seed);
    if (name == "rule_judge") return scripted::rule_judge();
    if (name == "synthetic") {
        double p = parts.size() > 1 ? parse_prob(parts[1], "admissibility") : 0.9;
        uint64_t s = parts.size() > 2 ? parse_u64(parts[2], "seed") : seed;
        return scripted::synthetic_judge(p, s);
    }
    throw BadBackendSpec("unknown scripted backend '" + name + "'");
}

}  // namespace

backend::BackendPtr make_backend(const std::string& spec, const world::TownGraph* town,
                                 uint64_t seed) {
    auto colon = spec.find(':');
    if (colon == std::string::npos)
        throw BadBackendSpec("backend spec '" + spec + "' has no scheme prefix");
    const std::string scheme = spec.substr(0, colon);
    const std::string rest = spec.substr(colon + 1);
    if (rest.empty()) throw BadBackendSpec("backend spec '" + spec + "' is incomplete");

    if (scheme == "scripted") return make_scripted(rest, town, seed);
    if (scheme == "remote") {
        policy::RemoteBackend::Config config;
        auto at = rest.find('@');
        config.model = rest.substr(0, at == std::string::npos ? rest.size() : at);
        config.endpoint = at == std::string::npos ? "http://localhost:8000" : rest.substr(at + 1);
        if (config.model.empty()) throw BadBackendSpec("remote backend needs a model name");
        return std::make_shared<policy::RemoteBackend>(config);
    }
    if (scheme == "replay") {
        auto comma = rest.find(',');
        if (comma == std::string::npos)
            return std::make_shared<policy::ReplayBackend>(rest);
        auto inner = make_backend(rest.substr(comma + 1), town, seed);
        return std::make_shared<policy::ReplayBackend>(rest.substr(0, comma), inner);
    }
    if (scheme == "record") {
        auto comma = rest.find(',');
        if (comma == std::string::npos)
            throw BadBackendSpec("record backend needs 'record:FILE,INNER'");
        auto inner = make_backend(rest.substr(comma + 1), town, seed);
        return std::make_shared<policy::RecordingBackend>(inner, rest.substr(0, comma));
    }
    throw BadBackendSpec("unknown backend scheme '" + scheme + "'");
}

std::vector<double> default_epsilon_grid() {
    return {0.05, 0.11, 0.17, 0.23, 0.29, 0.35};
}

namespace {

// Flat JSON config support for CLI11: {"option": value} plus one nested
// object per subcommand.
class JsonConfig : public CLI::Config {
  public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override {
        return "{}\n";
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json doc = json::parse(input);
        std::vector<CLI::ConfigItem> out;
        walk(doc, {}, out);
        return out;
    }

  private:
    static void walk(const json& node, std::vector<std::string> parents,
                     std::vector<CLI::ConfigItem>& out) {
        for (const auto& [key, value] : node.items()) {
            if (value.is_object()) {
                auto next = parents;
                next.push_back(key);
                walk(value, next, out);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array())
                for (const auto& entry : value) item.inputs.push_back(scalar(entry));
            else
                item.inputs.push_back(scalar(value));
            out.push_back(std::move(item));
        }
    }

    static std::string scalar(const json& v) {
        return v.is_string() ? v.get<std::string>() : v.dump();
    }
};

struct CalibrationSplit {
    std::vector<conformal::CalibrationExample> calibration;
    std::vector<conformal::CalibrationExample> test;
};

CalibrationSplit split_examples(const std::vector<conformal::CalibrationExample>& examples) {
    CalibrationSplit out;
    for (const auto& e : examples)
        (e.split == "calibration" ? out.calibration : out.test).push_back(e);
    return out;
}

std::vector<conformal::CalibrationExample> load_examples(const std::string& path) {
    std::vector<conformal::CalibrationExample> out;
    for (const auto& line : read_lines(path)) {
        if (line.empty()) continue;
        out.push_back(conformal::CalibrationExample::from_json(json::parse(line)));
    }
    return out;
}

struct DrawnExamples {
    std::vector<std::vector<conformal::Draw>> draws;
    std::vector<std::string> labels;
};

DrawnExamples draw_examples(backend::Backend& judge,
                            const std::vector<conformal::CalibrationExample>& examples,
                            const conformal::ConformalConfig& config,
                            const backend::CompletionOptions& options) {
    DrawnExamples out;
    for (const auto& e : examples) {
        out.draws.push_back(conformal::draw_all(judge, e, config, options));
        out.labels.push_back(e.label);
    }
    return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"multicultural town benchmark driver"};
    app.require_subcommand(1);
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON file with option defaults per subcommand");

    uint64_t seed = 0;
    app.add_option("--seed", seed, "root random seed")->capture_default_str();

    // sample-population
    auto* sp = app.add_subcommand("sample-population", "draw a synthetic census population");
    sp->fallthrough();
    size_t sp_n = 1000;
    std::string sp_demographics = data_file("demographics.json");
    std::string sp_out;
    sp->add_option("--n", sp_n, "number of agents")->capture_default_str();
    sp->add_option("--demographics", sp_demographics, "demographics tables JSON")
        ->capture_default_str();
    sp->add_option("--out", sp_out, "population JSON path")->required();

    // build-town
    auto* bt = app.add_subcommand("build-town", "build the town graph and place agents");
    bt->fallthrough();
    std::string bt_pop, bt_out;
    std::string bt_norms = data_file("norms.jsonl");
    int bt_cap = 0;
    bt->add_option("--pop", bt_pop, "population JSON from sample-population")->required();
    bt->add_option("--norms", bt_norms, "norm records JSON-lines")->capture_default_str();
    bt->add_option("--norm-cap", bt_cap, "max norms attached per location (0 = no cap)")
        ->capture_default_str();
    bt->add_option("--out", bt_out, "town bundle JSON path")->required();

    // gen-goals
    auto* gg = app.add_subcommand("gen-goals", "generate one day plan per target");
    gg->fallthrough();
    std::string gg_pop, gg_town, gg_out, gg_backend;
    std::string gg_target = "all";
    int gg_attempts = 3;
    gg->add_option("--pop", gg_pop, "population JSON")->required();
    gg->add_option("--town", gg_town, "town bundle JSON")->required();
    gg->add_option("--target", gg_target, "agent id or 'all'")->capture_default_str();
    gg->add_option("--backend", gg_backend,
                   "planner backend; omitted means the deterministic template");
    gg->add_option("--attempts", gg_attempts, "re-prompts before the template fallback")
        ->capture_default_str();
    gg->add_option("--out", gg_out, "plans JSON path")->required();

    // run-sim
    auto* rs = app.add_subcommand("run-sim", "simulate one day per target and judge it");
    rs->fallthrough();
    std::string rs_pop, rs_town, rs_plans, rs_outdir;
    std::string rs_target = "all";
    std::string rs_target_backend = "scripted:goal_seeker";
    std::string rs_supporting_backend = "scripted:chatter";
    std::string rs_judge = "scripted:rule_judge";
    std::string rs_challenge = "subtle social pressure";
    int rs_max_steps = engine::kMaxSteps;
    bool rs_per_attribute = false;
    rs->add_option("--pop", rs_pop, "population JSON")->required();
    rs->add_option("--town", rs_town, "town bundle JSON")->required();
    rs->add_option("--plans", rs_plans, "plans JSON from gen-goals")->required();
    rs->add_option("--target", rs_target, "agent id or 'all'")->capture_default_str();
    rs->add_option("--target-backend", rs_target_backend, "backend for the target agent")
        ->capture_default_str();
    rs->add_option("--supporting-backend", rs_supporting_backend,
                   "backend for supporting agents")
        ->capture_default_str();
    rs->add_option("--judge", rs_judge, "judge backend for online verification")
        ->capture_default_str();
    rs->add_option("--challenge", rs_challenge, "challenge style line for supporting agents")
        ->capture_default_str();
    rs->add_option("--max-steps", rs_max_steps, "step cap for the day")->capture_default_str();
    rs->add_flag("--per-attribute", rs_per_attribute,
                 "score faithfulness per profile attribute");
    rs->add_option("--out-dir", rs_outdir, "directory for trajectory and metrics files")
        ->required();

    // verify
    auto* vf = app.add_subcommand("verify", "re-judge a serialized trajectory");
    vf->fallthrough();
    std::string vf_traj, vf_pop, vf_town, vf_plans, vf_judge, vf_out, vf_metrics;
    bool vf_per_attribute = false;
    vf->add_option("--trajectory", vf_traj, "trajectory JSON-lines file")->required();
    vf->add_option("--pop", vf_pop, "population JSON")->required();
    vf->add_option("--town", vf_town, "town bundle JSON")->required();
    vf->add_option("--plans", vf_plans, "plans JSON")->required();
    vf->add_option("--judge", vf_judge, "judge backend")->required();
    vf->add_flag("--per-attribute", vf_per_attribute,
                 "score faithfulness per profile attribute");
    vf->add_option("--out", vf_out, "judgment JSON-lines path")->required();
    vf->add_option("--metrics", vf_metrics, "aggregate metrics JSON path");

    // calibrate
    auto* cb = app.add_subcommand("calibrate", "pick a certified stopping threshold");
    cb->fallthrough();
    std::string cb_examples, cb_backend, cb_out;
    int cb_synthetic = 0;
    double cb_epsilon = 0.2, cb_delta = conformal::kDelta;
    int cb_kmax = 20;
    double cb_lambda_sim = 0.7, cb_lambda_qual = 0.0;
    cb->add_option("--examples", cb_examples, "CalibrationExample JSON-lines file");
    cb->add_option("--synthetic", cb_synthetic,
                   "generate this many synthetic examples instead (half calibration)");
    cb->add_option("--backend", cb_backend, "judge backend to calibrate")->required();
    cb->add_option("--epsilon", cb_epsilon, "target risk level")->capture_default_str();
    cb->add_option("--delta", cb_delta, "confidence parameter")->capture_default_str();
    cb->add_option("--k-max", cb_kmax, "draw budget per example")->capture_default_str();
    cb->add_option("--lambda-sim", cb_lambda_sim, "duplicate-rejection similarity bound")
        ->capture_default_str();
    cb->add_option("--lambda-qual", cb_lambda_qual, "per-candidate quality floor")
        ->capture_default_str();
    cb->add_option("--out", cb_out, "chosen config JSON path")->required();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "risk curve over held-out examples");
    ev->fallthrough();
    std::string ev_examples, ev_backend, ev_config, ev_out;
    std::string ev_format = "csv";
    int ev_synthetic = 0;
    double ev_delta = conformal::kDelta;
    int ev_kmax = 20;
    double ev_lambda_sim = 0.7, ev_lambda_qual = 0.0;
    std::vector<double> ev_epsilons;
    ev->add_option("--examples", ev_examples, "CalibrationExample JSON-lines file");
    ev->add_option("--synthetic", ev_synthetic,
                   "generate this many synthetic examples instead (half calibration)");
    ev->add_option("--backend", ev_backend, "judge backend under evaluation")->required();
    ev->add_option("--epsilons", ev_epsilons, "risk levels (default 0.05..0.35 in 6 steps)")
        ->delimiter(',');
    ev->add_option("--delta", ev_delta, "confidence parameter")->capture_default_str();
    ev->add_option("--k-max", ev_kmax, "draw budget per example")->capture_default_str();
    ev->add_option("--lambda-sim", ev_lambda_sim, "duplicate-rejection similarity bound")
        ->capture_default_str();
    ev->add_option("--lambda-qual", ev_lambda_qual, "per-candidate quality floor")
        ->capture_default_str();
    ev->add_option("--calibrated-config", ev_config,
                   "skip per-epsilon calibration and evaluate this config JSON");
    ev->add_option("--format", ev_format, "csv or json")->capture_default_str();
    ev->add_option("--out", ev_out, "report path")->required();

    // report
    auto* rp = app.add_subcommand("report", "aggregate finished runs into grouped tables");
    rp->fallthrough();
    std::string rp_runs, rp_results, rp_pop, rp_out;
    std::string rp_group = "nationality";
    std::string rp_format = "csv";
    bool rp_include_target = false;
    rp->add_option("--runs", rp_runs, "directory of *.trajectory.jsonl files");
    rp->add_option("--results", rp_results, "precomputed RunResult JSON array");
    rp->add_option("--pop", rp_pop, "population JSON")->required();
    rp->add_option("--group-by", rp_group, "nationality, location, or culture_count")
        ->capture_default_str();
    rp->add_flag("--include-target", rp_include_target,
                 "count the target's own nationality as a culture");
    rp->add_option("--format", rp_format, "csv or json")->capture_default_str();
    rp->add_option("--out", rp_out, "report path")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (app.got_subcommand(sp)) {
            auto tables = population::load_demographics_file(sp_demographics);
            auto pop = population::sample_population(sp_n, tables, seed);
            write_json_file(sp_out, pop.to_json());
            out << "wrote " << pop.agents.size() << " agents to " << sp_out << "\n";
        } else if (app.got_subcommand(bt)) {
            auto pop = population::Population::from_json(load_json_file(bt_pop));
            Rng root(seed);
            auto town_rng = root.split("town");
            auto town = world::build_town(world::default_location_counts(), town_rng);
            auto norms = world::load_norms_file(bt_norms);
            auto norm_rng = root.split("norms");
            world::attach_norms(town, norms, norm_rng,
                                bt_cap > 0 ? std::optional<size_t>(bt_cap) : std::nullopt);
            auto place_rng = root.split("placement");
            auto assignment = world::assign_homes_jobs(pop, town, place_rng);
            write_json_file(bt_out, json{{"seed", seed},
                                         {"town", town.to_json()},
                                         {"assignment", assignment.to_json()},
                                         {"norms", norm_records_json(norms)}});
            out << "wrote " << town.nodes.size() << " locations to " << bt_out << "\n";
        } else if (app.got_subcommand(gg)) {
            auto pop = population::Population::from_json(load_json_file(gg_pop));
            auto bundle = load_town_bundle(gg_town);
            auto targets = resolve_targets(pop, gg_target);
            backend::BackendPtr planner;
            if (!gg_backend.empty()) planner = make_backend(gg_backend, &bundle.town, seed);
            Rng root(seed);
            json plans = json::object();
            for (const auto& id : targets) {
                const auto* profile = pop.find(id);
                auto rng = root.split("plan:" + id);
                auto plan = planner ? goals::generate_goal_plan(*profile, bundle.town, *planner,
                                                                rng, gg_attempts)
                                    : goals::templated_goal_plan(*profile, bundle.town, rng);
                plans[id] = plan.to_json();
            }
            write_json_file(gg_out, json{{"seed", seed}, {"plans", plans}});
            out << "wrote " << targets.size() << " plans to " << gg_out << "\n";
        } else if (app.got_subcommand(rs)) {
            auto pop = population::Population::from_json(load_json_file(rs_pop));
            auto bundle = load_town_bundle(rs_town);
            auto plans_doc = load_json_file(rs_plans);
            auto targets = resolve_targets(pop, rs_target);
            auto target_backend = make_backend(rs_target_backend, &bundle.town, seed);
            auto supporting_backend = make_backend(rs_supporting_backend, &bundle.town, seed + 1);
            auto judge_backend = make_backend(rs_judge, &bundle.town, seed + 2);

            engine::RunConfig config;
            config.max_steps = rs_max_steps;
            config.seed = seed;
            config.challenge_style = rs_challenge;
            config.target_options = policy::decoding_defaults_for(target_backend->model_id());
            config.supporting_options =
                policy::decoding_defaults_for(supporting_backend->model_id());
            config.config_hash =
                sha256_hex(json{{"target_backend", rs_target_backend},
                                {"supporting_backend", rs_supporting_backend},
                                {"judge", rs_judge},
                                {"max_steps", rs_max_steps},
                                {"challenge", rs_challenge},
                                {"per_attribute", rs_per_attribute},
                                {"seed", seed},
                                {"template_version", policy::kTemplateVersion}}
                               .dump());

            verifier::VerifierConfig vconfig;
            vconfig.per_attribute_faithfulness = rs_per_attribute;
            vconfig.options = policy::decoding_defaults_for(judge_backend->model_id());

            fs::create_directories(rs_outdir);
            for (const auto& id : targets) {
                auto plan = plan_for(plans_doc, id);
                auto state =
                    engine::init_state(pop, bundle.town, bundle.assignment, bundle.norms, plan, id);
                auto judge = verifier::make_online_hook(judge_backend, vconfig);
                auto traj =
                    engine::run_day(state, *target_backend, *supporting_backend, config, judge);
                const std::string stem = rs_outdir + "/" + id;
                traj.save_jsonl(stem + ".trajectory.jsonl");
                auto metrics = judgments::aggregate(traj.judgments);
                write_json_file(stem + ".metrics.json", metrics.to_json());
                out << id << ": steps=" << traj.steps.size()
                    << " goal=" << fixed4(metrics.goal_completion)
                    << " adherence=" << fixed4(metrics.norm_adherence) << "\n";
            }
        } else if (app.got_subcommand(vf)) {
            auto traj = engine::Trajectory::load_jsonl(vf_traj);
            auto pop = population::Population::from_json(load_json_file(vf_pop));
            auto bundle = load_town_bundle(vf_town);
            auto plans_doc = load_json_file(vf_plans);
            auto plan = plan_for(plans_doc, traj.header.value("target_id", ""));
            auto judge_backend = make_backend(vf_judge, &bundle.town, seed);
            verifier::VerifierConfig vconfig;
            vconfig.per_attribute_faithfulness = vf_per_attribute;
            vconfig.options = policy::decoding_defaults_for(judge_backend->model_id());
            auto judgments_list =
                verifier::verify_trajectory(*judge_backend, traj, pop, bundle.norms, plan, vconfig);
            std::string lines;
            for (const auto& j : judgments_list) lines += j.to_json().dump() + "\n";
            write_file(vf_out, lines);
            if (!vf_metrics.empty())
                write_json_file(vf_metrics, judgments::aggregate(judgments_list).to_json());
            out << "judged " << judgments_list.size() << " steps to " << vf_out << "\n";
        } else if (app.got_subcommand(cb)) {
            auto examples = cb_synthetic > 0
                                ? conformal::make_synthetic_examples(cb_synthetic, seed,
                                                                     cb_synthetic / 2)
                                : load_examples(cb_examples);
            auto split = split_examples(examples);
            if (split.calibration.empty())
                throw NoValidConfig("no examples carry split=\"calibration\"");
            auto judge = make_backend(cb_backend, nullptr, seed);
            conformal::ConformalConfig base;
            base.lambda_sim = cb_lambda_sim;
            base.lambda_qual = cb_lambda_qual;
            base.k_max = cb_kmax;
            backend::CompletionOptions options;
            options.want_logprobs = true;
            auto drawn = draw_examples(*judge, split.calibration, base, options);
            auto result = conformal::calibrate(drawn.draws, drawn.labels, cb_epsilon, cb_delta,
                                               conformal::default_lambda_grid(), base);
            write_json_file(cb_out, json{{"epsilon", cb_epsilon},
                                         {"delta", cb_delta},
                                         {"r_hat", result.r_hat},
                                         {"p_value", result.p_value},
                                         {"grid_index", result.grid_index},
                                         {"config", result.config.to_json()}});
            out << "lambda_stop=" << result.config.lambda_stop << " r_hat=" << result.r_hat
                << " p=" << result.p_value << "\n";
        } else if (app.got_subcommand(ev)) {
            auto examples = ev_synthetic > 0
                                ? conformal::make_synthetic_examples(ev_synthetic, seed,
                                                                     ev_synthetic / 2)
                                : load_examples(ev_examples);
            auto split = split_examples(examples);
            if (split.test.empty()) throw EmptyResults("no held-out test examples");
            auto judge = make_backend(ev_backend, nullptr, seed);
            conformal::ConformalConfig base;
            base.lambda_sim = ev_lambda_sim;
            base.lambda_qual = ev_lambda_qual;
            base.k_max = ev_kmax;
            backend::CompletionOptions options;
            options.want_logprobs = true;

            std::map<std::string, std::pair<DrawnExamples, DrawnExamples>> by_task;
            for (const auto& e : split.calibration) {
                auto& slot = by_task[e.task].first;
                slot.draws.push_back(conformal::draw_all(*judge, e, base, options));
                slot.labels.push_back(e.label);
            }
            for (const auto& e : split.test) {
                auto& slot = by_task[e.task].second;
                slot.draws.push_back(conformal::draw_all(*judge, e, base, options));
                slot.labels.push_back(e.label);
            }

            auto epsilons = ev_epsilons.empty() ? default_epsilon_grid() : ev_epsilons;
            std::vector<report::ConformalRow> rows;
            for (const auto& [task, drawn] : by_task) {
                const auto& [calib, test] = drawn;
                for (double epsilon : epsilons) {
                    conformal::ConformalConfig config = base;
                    if (!ev_config.empty()) {
                        json doc = load_json_file(ev_config);
                        config = conformal::ConformalConfig::from_json(
                            doc.contains("config") ? doc.at("config") : doc);
                    } else {
                        try {
                            config = conformal::calibrate(calib.draws, calib.labels, epsilon,
                                                          ev_delta,
                                                          conformal::default_lambda_grid(), base)
                                         .config;
                        } catch (const NoValidConfig& e) {
                            err << task << " epsilon=" << epsilon << ": " << e.what()
                                << " (row skipped)\n";
                            continue;
                        }
                    }
                    report::ConformalRow row;
                    row.task = task;
                    row.epsilon = epsilon;
                    row.config = config;
                    row.eval = conformal::evaluate(test.draws, test.labels, config);
                    rows.push_back(std::move(row));
                }
            }
            report::emit_conformal_report(rows, ev_format, ev_out);
            out << "wrote " << rows.size() << " rows to " << ev_out << "\n";
        } else if (app.got_subcommand(rp)) {
            auto pop = population::Population::from_json(load_json_file(rp_pop));
            std::vector<report::RunResult> results;
            if (!rp_results.empty())
                for (const auto& r : load_json_file(rp_results))
                    results.push_back(report::RunResult::from_json(r));
            if (!rp_runs.empty()) {
                std::vector<std::string> paths;
                const std::string suffix = ".trajectory.jsonl";
                for (const auto& entry : fs::directory_iterator(rp_runs)) {
                    auto name = entry.path().filename().string();
                    if (name.size() > suffix.size() &&
                        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
                        paths.push_back(entry.path().string());
                }
                std::sort(paths.begin(), paths.end());
                for (const auto& path : paths) {
                    auto traj = engine::Trajectory::load_jsonl(path);
                    auto judgments_list = traj.judgments;
                    const std::string sidecar =
                        path.substr(0, path.size() - suffix.size()) + ".judgments.jsonl";
                    if (fs::exists(sidecar)) {
                        judgments_list.clear();
                        for (const auto& line : read_lines(sidecar)) {
                            if (line.empty()) continue;
                            judgments_list.push_back(
                                judgments::StepJudgment::from_json(json::parse(line)));
                        }
                    }
                    if (judgments_list.empty())
                        throw EmptyTrajectory(path + " has no judgments; run verify first");
                    results.push_back(report::make_run_result(traj.header, judgments_list, pop));
                }
            }
            auto grouped =
                report::group_by(results, report::group_key_from(rp_group), rp_include_target);
            report::emit_report(grouped, rp_format, rp_out);
            out << "wrote " << grouped.rows.size() << " groups to " << rp_out << "\n";
        }
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace normtown::cli
