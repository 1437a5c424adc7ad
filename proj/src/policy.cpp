#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "normtown/policy.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "normtown/engine.hpp"
#include "normtown/errors.hpp"

namespace normtown::backend {

json CompletionOptions::to_json() const {
    return json{{"temperature", temperature}, {"top_p", top_p},
                {"top_k", top_k},             {"min_p", min_p},
                {"max_tokens", max_tokens},   {"want_logprobs", want_logprobs},
                {"seed", seed},               {"sample_index", sample_index}};
}

}  // namespace normtown::backend

namespace normtown::policy {

namespace {

constexpr const char* kPhoneCallId = "CALL_CONTACT";
constexpr const char* kPhoneMessageId = "SEND_MESSAGE";

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep = ", ") {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string or_placeholder(const std::string& s, const char* placeholder) {
    return s.empty() ? placeholder : s;
}

std::string visible_brief(const std::vector<VisibleAgentView>& views) {
    std::vector<std::string> parts;
    for (const auto& v : views) parts.push_back(v.name + " (" + v.id + ")");
    return parts.empty() ? "(no one else is here)" : join(parts);
}

std::string visible_detailed(const std::vector<VisibleAgentView>& views) {
    json arr = json::array();
    for (const auto& v : views) {
        json e{{"id", v.id},
               {"name", v.name},
               {"nationality", v.nationality},
               {"roles", v.roles}};
        if (v.in_conversation) e["in_conversation"] = true;
        arr.push_back(std::move(e));
    }
    return arr.dump();
}

std::string relationships_text(const std::vector<VisibleAgentView>& views) {
    std::vector<std::string> parts;
    for (const auto& v : views)
        if (!v.relationship_kinds.empty())
            parts.push_back(v.name + " (" + v.id + "): " + join(v.relationship_kinds));
    return parts.empty() ? "(none you know of)" : join(parts, "; ");
}

std::string actions_json(const std::vector<world::LocationActionSpec>& specs) {
    if (specs.empty()) return "(none)";
    json arr = json::array();
    for (const auto& s : specs) arr.push_back(s.to_json());
    return arr.dump();
}

std::string phone_json(const std::vector<PhoneContactView>& contacts) {
    if (contacts.empty()) return "(no contacts)";
    json arr = json::array();
    for (const auto& c : contacts)
        arr.push_back(json{{"id", c.id}, {"name", c.name}, {"relationship", c.kind}});
    return arr.dump();
}

std::string norms_json(const std::vector<NormView>& norms) {
    if (norms.empty()) return "(none listed)";
    json arr = json::array();
    for (const auto& n : norms) arr.push_back(json{{"id", n.id}, {"text", n.text}});
    return arr.dump();
}

std::string adjacent_text(const std::vector<std::pair<std::string, std::string>>& adj) {
    std::vector<std::string> parts;
    for (const auto& [id, type] : adj) parts.push_back(id + " (" + type + ")");
    return parts.empty() ? "(none)" : join(parts);
}

std::string current_subtask_text(const PolicyContext& ctx) {
    if (!ctx.plan || ctx.current_subtask_index < 0 ||
        ctx.current_subtask_index >= static_cast<int>(ctx.plan->subtasks.size()))
        return "(all subtasks are complete)";
    json j = ctx.plan->subtasks[static_cast<size_t>(ctx.current_subtask_index)].to_json();
    j["index"] = ctx.current_subtask_index;
    return j.dump();
}

std::string completed_text(const PolicyContext& ctx) {
    return json(ctx.completed_subtask_ids).dump();
}

std::string history_text(const ConversationView& view) {
    if (view.recent_turns.empty()) return "(no turns yet)";
    std::vector<std::string> parts;
    for (const auto& [speaker, utterance] : view.recent_turns)
        parts.push_back(speaker + ": " + utterance);
    return join(parts, "\n");
}

std::string goal_text_of(const PolicyContext& ctx) {
    if (ctx.kind == ContextKind::TargetStep || ctx.kind == ContextKind::TargetConversation)
        return ctx.plan ? ctx.plan->goal_text : "(no goal set)";
    return ctx.target_goal_text ? *ctx.target_goal_text : "(unknown)";
}

}  // namespace

const PromptTemplate& template_for(ContextKind kind) {
    switch (kind) {
        case ContextKind::TargetStep: return get_template(TemplateId::TargetStep);
        case ContextKind::TargetConversation: return get_template(TemplateId::TargetConversation);
        case ContextKind::SupportingStep: return get_template(TemplateId::SupportingStep);
        case ContextKind::SupportingConversation:
            return get_template(TemplateId::SupportingConversation);
    }
    throw Error("unreachable context kind");
}

std::string render_prompt(const PolicyContext& ctx) {
    std::vector<std::pair<std::string, std::string>> values;
    auto put = [&](const char* key, std::string value) {
        values.emplace_back(key, std::move(value));
    };
    put("profile", ctx.profile.dump());
    put("goal", goal_text_of(ctx));

    switch (ctx.kind) {
        case ContextKind::TargetStep:
            put("goal_plan", ctx.plan ? ctx.plan->to_json().dump() : "(none)");
            put("current_subtask", current_subtask_text(ctx));
            put("completed_subtasks", completed_text(ctx));
            put("current_time", ctx.current_time);
            put("visible_agents", visible_brief(ctx.visible));
            put("visible_agents_detailed", visible_detailed(ctx.visible));
            put("relationships", relationships_text(ctx.visible));
            put("agent_roles", ctx.agent_roles.empty() ? "(none)" : join(ctx.agent_roles));
            put("location_actions", actions_json(ctx.location_actions));
            put("phone", phone_json(ctx.phone_contacts));
            put("observation", or_placeholder(ctx.observation, "(nothing notable)"));
            put("current_location", ctx.current_location + " (" + ctx.current_location_type + ")");
            put("adjacent_locations", adjacent_text(ctx.adjacent));
            break;
        case ContextKind::TargetConversation: {
            if (!ctx.conversation) throw MissingField("conversation context without conversation");
            put("goal_plan", ctx.plan ? ctx.plan->to_json().dump() : "(none)");
            put("current_subtask", current_subtask_text(ctx));
            put("completed_subtasks", completed_text(ctx));
            put("relationships", relationships_text(ctx.visible));
            put("conversation_id", ctx.conversation->id);
            put("conversation_location", ctx.conversation->location_id);
            put("conversation_participants", join(ctx.conversation->participants));
            put("conversation_history", history_text(*ctx.conversation));
            put("memory_summary", or_placeholder(ctx.memory_summary, "(none)"));
            break;
        }
        case ContextKind::SupportingStep:
            put("current_time", ctx.current_time);
            put("current_location", ctx.current_location + " (" + ctx.current_location_type + ")");
            put("adjacent_locations", adjacent_text(ctx.adjacent));
            put("visible_agents", visible_brief(ctx.visible));
            put("visible_agents_detailed", visible_detailed(ctx.visible));
            put("agent_roles", ctx.agent_roles.empty() ? "(none)" : join(ctx.agent_roles));
            put("relationships", relationships_text(ctx.visible));
            put("location_actions", actions_json(ctx.location_actions));
            put("phone", phone_json(ctx.phone_contacts));
            put("location_norms", norms_json(ctx.norms));
            put("memory_summary", or_placeholder(ctx.memory_summary, "(none)"));
            break;
        case ContextKind::SupportingConversation:
            put("challenge_style", or_placeholder(ctx.challenge_style, "skeptical"));
            put("target_profile", ctx.target_profile ? ctx.target_profile->dump() : "(unknown)");
            put("location_norms", norms_json(ctx.norms));
            put("relationships", relationships_text(ctx.visible));
            put("current_subtask", current_subtask_text(ctx));
            put("memory_summary", or_placeholder(ctx.memory_summary, "(none)"));
            put("action_context", or_placeholder(ctx.action_context, "(none)"));
            put("last_target_utterance", or_placeholder(ctx.last_target_utterance, "(nothing)"));
            break;
    }
    return render_template(template_for(ctx.kind), values);
}

// ---- parsing ---------------------------------------------------------------

std::optional<json> extract_json(const std::string& text) {
    for (size_t start = 0; start < text.size(); ++start) {
        char open = text[start];
        if (open != '{' && open != '[') continue;
        char close = open == '{' ? '}' : ']';
        int depth = 0;
        bool in_string = false, escaped = false;
        for (size_t i = start; i < text.size(); ++i) {
            char c = text[i];
            if (in_string) {
                if (escaped)
                    escaped = false;
                else if (c == '\\')
                    escaped = true;
                else if (c == '"')
                    in_string = false;
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == open) {
                ++depth;
            } else if (c == close) {
                if (--depth == 0) {
                    json j = json::parse(text.substr(start, i - start + 1), nullptr, false);
                    if (!j.is_discarded()) return j;
                    break;  // balanced but invalid; retry from the next opener
                }
            }
        }
    }
    return std::nullopt;
}

namespace {

std::string field_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) return "";
    if (it->is_string()) return it->get<std::string>();
    if (it->is_null()) return "";
    return it->dump();
}

std::vector<std::string> field_string_list(const json& j, const char* key) {
    std::vector<std::string> out;
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return out;
    if (it->is_string()) {
        if (!it->get<std::string>().empty()) out.push_back(it->get<std::string>());
        return out;
    }
    if (it->is_array())
        for (const auto& e : *it) {
            if (e.is_string())
                out.push_back(e.get<std::string>());
            else if (!e.is_null())
                out.push_back(e.dump());
        }
    return out;
}

// Resolves "agent_000012", "Maria Rossi (agent_000012)" or a unique visible
// name to an agent id among candidates.
std::optional<std::string> resolve_ref(const std::string& ref,
                                       const std::vector<std::pair<std::string, std::string>>&
                                           candidates /* (id, name) */) {
    for (const auto& [id, name] : candidates)
        if (ref == id) return id;
    auto lp = ref.rfind('(');
    auto rp = ref.rfind(')');
    if (lp != std::string::npos && rp != std::string::npos && rp > lp) {
        std::string inner = ref.substr(lp + 1, rp - lp - 1);
        for (const auto& [id, name] : candidates)
            if (inner == id) return id;
    }
    std::optional<std::string> match;
    for (const auto& [id, name] : candidates) {
        if (name == ref) {
            if (match) return std::nullopt;  // ambiguous
            match = id;
        }
    }
    return match;
}

std::map<std::string, std::string> field_param_map(const json& j, const char* key) {
    std::map<std::string, std::string> out;
    auto it = j.find(key);
    if (it == j.end() || !it->is_object()) return out;
    for (const auto& [k, v] : it->items()) {
        if (v.is_string())
            out[k] = v.get<std::string>();
        else if (!v.is_null())
            out[k] = v.dump();
    }
    return out;
}

}  // namespace

ActionParse parse_action(const std::string& text, const engine::SimState& state,
                         const std::string& agent_id) {
    auto j = extract_json(text);
    if (!j || !j->is_object()) return {std::nullopt, "reply contains no JSON object"};

    std::string type = upper(field_string(*j, "action_type"));
    if (type.empty()) return {std::nullopt, "missing action_type"};

    std::vector<std::pair<std::string, std::string>> visible;
    for (const auto& id : state.visible_to(agent_id))
        visible.emplace_back(id, state.profile_of(id).name);

    engine::Action action = engine::WaitAction{};
    if (type == "MOVE") {
        std::string dest = field_string(*j, "location");
        if (dest.empty()) return {std::nullopt, "MOVE needs a destination location id"};
        action = engine::MoveAction{dest};
    } else if (type == "TALK") {
        engine::TalkAction talk;
        for (const auto& ref : field_string_list(*j, "talk_to")) {
            auto id = resolve_ref(ref, visible);
            if (!id) return {std::nullopt, "TALK refers to '" + ref + "' who is not visible here"};
            if (std::find(talk.targets.begin(), talk.targets.end(), *id) == talk.targets.end())
                talk.targets.push_back(*id);
        }
        talk.utterance = field_string(*j, "utterance");
        talk.intent = field_string(*j, "intent");
        action = std::move(talk);
    } else if (type == "WAIT") {
        action = engine::WaitAction{};
    } else if (type == "LOCATION_ACTION") {
        auto it = j->find("location_action");
        if (it == j->end() || !it->is_object())
            return {std::nullopt, "LOCATION_ACTION needs a location_action object"};
        engine::LocationAction la;
        la.action_id = upper(field_string(*it, "id"));
        if (la.action_id.empty()) return {std::nullopt, "location_action.id is empty"};
        la.parameters = field_param_map(*it, "parameters");
        for (const auto& ref : field_string_list(*it, "targets")) {
            auto id = resolve_ref(ref, visible);
            if (!id)
                return {std::nullopt,
                        "location_action target '" + ref + "' is not visible here"};
            if (std::find(la.targets.begin(), la.targets.end(), *id) == la.targets.end())
                la.targets.push_back(*id);
        }
        la.utterance = field_string(*it, "utterance");
        action = std::move(la);
    } else if (type == "PHONE_ACTION") {
        auto it = j->find("phone_action");
        if (it == j->end() || !it->is_object())
            return {std::nullopt, "PHONE_ACTION needs a phone_action object"};
        std::string id = upper(field_string(*it, "id"));
        engine::PhoneAction phone;
        if (id == kPhoneCallId)
            phone.kind = "call";
        else if (id == kPhoneMessageId)
            phone.kind = "message";
        else
            return {std::nullopt, "unknown phone action '" + id + "'"};
        std::vector<std::pair<std::string, std::string>> contacts;
        auto pb = state.phonebook.find(agent_id);
        if (pb != state.phonebook.end())
            for (const auto& c : pb->second)
                contacts.emplace_back(c.id, state.profile_of(c.id).name);
        std::string ref = field_string(*it, "contact_id");
        auto contact = resolve_ref(ref, contacts);
        if (!contact)
            return {std::nullopt, "contact '" + ref + "' is not in your phone"};
        phone.contact_id = *contact;
        phone.content = field_string(*it, "utterance");
        if (phone.content.empty()) return {std::nullopt, "PHONE_ACTION needs an utterance"};
        action = std::move(phone);
    } else {
        return {std::nullopt, "unknown action_type '" + type + "'"};
    }

    if (auto err = engine::validate_action(state, agent_id, action))
        return {std::nullopt, *err};
    return {std::move(action), ""};
}

ConversationParse parse_conversation_move(const std::string& text) {
    auto j = extract_json(text);
    if (!j || !j->is_object()) return {std::nullopt, "reply contains no JSON object"};
    std::string act = upper(field_string(*j, "action"));
    if (act == "LEAVE") return {ConversationMove{true, ""}, ""};
    if (act == "SAY") {
        std::string utterance = field_string(*j, "utterance");
        if (utterance.empty()) return {std::nullopt, "SAY needs a non-empty utterance"};
        return {ConversationMove{false, std::move(utterance)}, ""};
    }
    return {std::nullopt, "action must be SAY or LEAVE"};
}

// ---- backends ---------------------------------------------------------------

backend::CompletionOptions decoding_defaults_for(const std::string& model_id) {
    backend::CompletionOptions o;
    std::string m = lower(model_id);
    if (m.find("qwen") != std::string::npos) {
        o.temperature = 0.6;
        o.top_p = 0.95;
        o.top_k = 20;
    } else if (m.find("ministral") != std::string::npos) {
        o.temperature = 0.7;
        o.top_p = 0.95;
    } else if (m.find("llama") != std::string::npos) {
        o.temperature = 0.6;
        o.top_p = 0.9;
    } else if (m.find("gemini") != std::string::npos) {
        o.temperature = 1.0;
        o.top_p = 0.95;
        o.top_k = 64;
    } else {
        o.temperature = 0.7;
        o.top_p = 0.95;
    }
    return o;
}

std::string replay_cache_key(const std::string& template_version, const std::string& model_id,
                             const backend::CompletionOptions& options,
                             const std::string& prompt) {
    std::string material = template_version;
    material += '\n';
    material += model_id;
    material += '\n';
    material += options.to_json().dump();
    material += '\n';
    material += prompt;
    return sha256_hex(material);
}

namespace {

json cache_line(const std::string& key, const std::string& model,
                const backend::CompletionOptions& options, const std::string& prompt,
                const backend::ScoredCompletion& response) {
    return json{{"key", key},
                {"template_version", kTemplateVersion},
                {"model", model},
                {"options", options.to_json()},
                {"prompt", prompt},
                {"response",
                 {{"text", response.text},
                  {"token_logprobs", response.token_logprobs},
                  {"finish_reason", response.finish_reason}}}};
}

void append_line(const std::string& path, const json& line) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoFailure("cannot append to " + path);
    out << line.dump() << '\n';
}

backend::ScoredCompletion completion_from(const json& response) {
    backend::ScoredCompletion r;
    r.text = response.value("text", "");
    if (response.contains("token_logprobs"))
        r.token_logprobs = response.at("token_logprobs").get<std::vector<double>>();
    r.finish_reason = response.value("finish_reason", "stop");
    return r;
}

}  // namespace

RecordingBackend::RecordingBackend(backend::BackendPtr inner, std::string cache_path)
    : inner_(std::move(inner)), cache_path_(std::move(cache_path)) {
    // metadata line up front, so a session that never consults this backend
    // still leaves a replayable cache that knows the model id
    append_line(cache_path_,
                json{{"model", inner_->model_id()}, {"template_version", kTemplateVersion}});
}

backend::ScoredCompletion RecordingBackend::complete(const std::string& prompt,
                                                     const backend::CompletionOptions& options,
                                                     const backend::QueryHints* hints) {
    auto response = inner_->complete(prompt, options, hints);
    auto key = replay_cache_key(kTemplateVersion, inner_->model_id(), options, prompt);
    std::lock_guard<std::mutex> lock(mutex_);
    append_line(cache_path_, cache_line(key, inner_->model_id(), options, prompt, response));
    return response;
}

ReplayBackend::ReplayBackend(std::string cache_path, backend::BackendPtr fallback)
    : cache_path_(std::move(cache_path)), fallback_(std::move(fallback)) {
    if (std::filesystem::exists(cache_path_)) {
        for (const auto& line : read_lines(cache_path_)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            model_ = j.value("model", model_);
            if (!j.contains("key")) continue;  // metadata line
            entries_[j.at("key").get<std::string>()] = completion_from(j.at("response"));
        }
    } else if (!fallback_) {
        throw IoFailure("replay cache not found: " + cache_path_);
    }
    if (entries_.empty() && fallback_) model_ = fallback_->model_id();
}

backend::ScoredCompletion ReplayBackend::complete(const std::string& prompt,
                                                  const backend::CompletionOptions& options,
                                                  const backend::QueryHints* hints) {
    auto key = replay_cache_key(kTemplateVersion, model_, options, prompt);
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = entries_.find(key);
        if (it != entries_.end()) return it->second;
    }
    if (!fallback_)
        throw CacheMiss("no cached completion for key " + key.substr(0, 12) + "... (" +
                        std::to_string(entries_.size()) + " entries loaded)");
    auto response = fallback_->complete(prompt, options, hints);
    std::lock_guard<std::mutex> lock(mutex_);
    entries_[key] = response;
    append_line(cache_path_, cache_line(key, model_, options, prompt, response));
    return response;
}

json RemoteBackend::request_body(const std::string& prompt,
                                 const backend::CompletionOptions& options) const {
    json body{{"model", config_.model},
              {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
              {"temperature", options.temperature},
              {"top_p", options.top_p},
              {"max_tokens", options.max_tokens}};
    if (options.top_k > 0) body["top_k"] = options.top_k;
    if (options.min_p > 0) body["min_p"] = options.min_p;
    if (options.want_logprobs) body["logprobs"] = true;
    if (options.seed != 0)
        body["seed"] = options.seed + static_cast<uint64_t>(options.sample_index);
    return body;
}

backend::ScoredCompletion RemoteBackend::complete(const std::string& prompt,
                                                  const backend::CompletionOptions& options,
                                                  const backend::QueryHints*) {
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.timeout_sec);
    client.set_read_timeout(config_.timeout_sec);
    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);
    const std::string body = request_body(prompt, options).dump();

    std::string last_error;
    for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(
                std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
        auto res = client.Post(config_.path, headers, body, "application/json");
        if (!res) {
            last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status == 200) {
            json r = json::parse(res->body, nullptr, false);
            if (r.is_discarded()) throw BackendUnavailable("unparseable completion response");
            const auto& choice = r.at("choices").at(0);
            backend::ScoredCompletion out;
            out.text = choice.at("message").at("content").get<std::string>();
            out.finish_reason = choice.value("finish_reason", "stop");
            if (choice.contains("logprobs") && choice["logprobs"].is_object()) {
                const auto& lp = choice["logprobs"];
                if (lp.contains("content") && lp["content"].is_array())
                    for (const auto& tok : lp["content"])
                        out.token_logprobs.push_back(tok.value("logprob", 0.0));
            }
            return out;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        throw BackendUnavailable("HTTP " + std::to_string(res->status) + " from " +
                                 config_.endpoint + config_.path + ": " +
                                 res->body.substr(0, 200));
    }
    throw BackendUnavailable("request to " + config_.endpoint + " failed after " +
                             std::to_string(config_.max_attempts) + " attempts: " + last_error);
}

// ---- deciding ----------------------------------------------------------------

StepDecision decide_step(backend::Backend& backend, const PolicyContext& ctx,
                         const engine::SimState& state,
                         const backend::CompletionOptions& options) {
    StepDecision out;
    const std::string base = render_prompt(ctx);
    std::string prompt = base;
    backend::QueryHints hints{&ctx, nullptr};
    for (int attempt = 0; attempt <= kRepairAttempts; ++attempt) {
        auto opts = options;
        opts.sample_index = options.sample_index + attempt;
        auto completion = backend.complete(prompt, opts, &hints);
        auto parsed = parse_action(completion.text, state, ctx.agent_id);
        if (parsed.ok()) {
            out.action = std::move(*parsed.action);
            out.repairs = static_cast<int>(out.rejection_reasons.size());
            return out;
        }
        out.rejection_reasons.push_back(parsed.error);
        prompt = base + "\n\nYour previous reply was rejected: " + parsed.error +
                 "\nReply again with ONE valid JSON object only.";
    }
    out.action = engine::WaitAction{};
    out.repairs = static_cast<int>(out.rejection_reasons.size());
    out.fell_back = true;
    return out;
}

ConversationDecision decide_conversation(backend::Backend& backend, const PolicyContext& ctx,
                                         const backend::CompletionOptions& options) {
    ConversationDecision out;
    const std::string base = render_prompt(ctx);
    std::string prompt = base;
    backend::QueryHints hints{&ctx, nullptr};
    for (int attempt = 0; attempt <= kRepairAttempts; ++attempt) {
        auto opts = options;
        opts.sample_index = options.sample_index + attempt;
        auto completion = backend.complete(prompt, opts, &hints);
        auto parsed = parse_conversation_move(completion.text);
        if (parsed.ok()) {
            out.move = std::move(*parsed.move);
            out.repairs = static_cast<int>(out.rejection_reasons.size());
            return out;
        }
        out.rejection_reasons.push_back(parsed.error);
        prompt = base + "\n\nYour previous reply was rejected: " + parsed.error +
                 "\nReply again with ONE valid JSON object only.";
    }
    out.move = ConversationMove{true, ""};
    out.repairs = static_cast<int>(out.rejection_reasons.size());
    out.fell_back = true;
    return out;
}

}  // namespace normtown::policy
