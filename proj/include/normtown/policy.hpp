#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "normtown/actions.hpp"
#include "normtown/backend.hpp"
#include "normtown/goals.hpp"
#include "normtown/templates.hpp"
#include "normtown/util.hpp"
#include "normtown/world.hpp"

namespace normtown::engine {
struct SimState;
}

namespace normtown::policy {

enum class ContextKind {
    TargetStep,
    TargetConversation,
    SupportingStep,
    SupportingConversation,
};

struct VisibleAgentView {
    std::string id;
    std::string name;
    std::string nationality;
    std::vector<std::string> roles;
    bool in_conversation = false;
    std::vector<std::string> relationship_kinds;  // viewer's edges to this agent
};

struct PhoneContactView {
    std::string id;
    std::string name;
    std::string kind;  // relationship kind that put them in the phonebook
};

struct ConversationView {
    std::string id;
    std::string location_id;
    std::vector<std::string> participants;
    std::vector<std::pair<std::string, std::string>> recent_turns;  // (speaker id, utterance)
};

struct NormView {
    std::string id;
    std::string text;
};

// Everything a policy prompt can mention, in structured form. render_prompt
// serializes the fields required by the context's template; scripted backends
// read the struct directly instead of re-parsing prompt text.
struct PolicyContext {
    ContextKind kind = ContextKind::TargetStep;
    std::string agent_id;
    json profile;

    std::string current_time;
    std::string current_location;
    std::string current_location_type;
    std::vector<std::pair<std::string, std::string>> adjacent;  // (id, type name)
    std::vector<VisibleAgentView> visible;
    std::vector<std::string> agent_roles;
    std::vector<world::LocationActionSpec> location_actions;
    std::vector<PhoneContactView> phone_contacts;
    std::string observation;
    std::string memory_summary;

    // Target contexts.
    std::optional<goals::GoalPlan> plan;
    int current_subtask_index = -1;  // -1 when every subtask is complete
    std::vector<std::string> completed_subtask_ids;

    // Supporting contexts.
    std::optional<json> target_profile;
    std::optional<std::string> target_goal_text;
    std::vector<NormView> norms;  // norms in force for the target here
    std::string challenge_style;
    std::string action_context;
    std::string last_target_utterance;

    // Conversation contexts.
    std::optional<ConversationView> conversation;
};

const PromptTemplate& template_for(ContextKind kind);
std::string render_prompt(const PolicyContext& ctx);

// ---- parsing ---------------------------------------------------------------

struct ActionParse {
    std::optional<engine::Action> action;
    std::string error;  // nonempty iff !action
    bool ok() const { return action.has_value(); }
};

// Extracts the first JSON object from completion text (tolerates surrounding
// prose and markdown fences), maps it onto an Action, resolves talk/dialogue
// target references against co-located agents, and validates against the
// engine's legality rules. Never throws for bad model output.
ActionParse parse_action(const std::string& text, const engine::SimState& state,
                         const std::string& agent_id);

struct ConversationMove {
    bool leave = false;
    std::string utterance;  // nonempty iff !leave
};

struct ConversationParse {
    std::optional<ConversationMove> move;
    std::string error;
    bool ok() const { return move.has_value(); }
};

ConversationParse parse_conversation_move(const std::string& text);

// First balanced JSON value in free-form completion text, or nullopt.
std::optional<json> extract_json(const std::string& text);

// ---- backends ---------------------------------------------------------------

// Table of decoding defaults keyed by model-name substring (qwen, ministral,
// llama, gemini); anything unrecognized gets temperature 0.7 / top_p 0.95.
backend::CompletionOptions decoding_defaults_for(const std::string& model_id);

struct ScriptedCall {
    const std::string& prompt;
    const backend::CompletionOptions& options;
    const backend::QueryHints* hints;
};

// Deterministic program standing in for a model; used by tests, offline runs
// and the synthetic judges.
class ScriptedBackend : public backend::Backend {
public:
    using Program = std::function<backend::ScoredCompletion(const ScriptedCall&)>;
    ScriptedBackend(std::string name, Program program)
        : name_(std::move(name)), program_(std::move(program)) {}

    backend::ScoredCompletion complete(const std::string& prompt,
                                       const backend::CompletionOptions& options,
                                       const backend::QueryHints* hints) override {
        return program_(ScriptedCall{prompt, options, hints});
    }
    std::string model_id() const override { return "scripted:" + name_; }

private:
    std::string name_;
    Program program_;
};

// Cache key covering everything that could change a completion.
std::string replay_cache_key(const std::string& template_version, const std::string& model_id,
                             const backend::CompletionOptions& options, const std::string& prompt);

// Wraps another backend and appends every (request, response) pair to a
// JSON-lines cache file for later replay.
class RecordingBackend : public backend::Backend {
public:
    RecordingBackend(backend::BackendPtr inner, std::string cache_path);
    backend::ScoredCompletion complete(const std::string& prompt,
                                       const backend::CompletionOptions& options,
                                       const backend::QueryHints* hints) override;
    std::string model_id() const override { return inner_->model_id(); }

private:
    backend::BackendPtr inner_;
    std::string cache_path_;
    std::mutex mutex_;
};

// Serves completions from a recorded cache. With no fallback a miss throws
// CacheMiss, which makes replay runs prove that no live backend was
// consulted; with a fallback, misses are forwarded and appended to the cache.
class ReplayBackend : public backend::Backend {
public:
    explicit ReplayBackend(std::string cache_path, backend::BackendPtr fallback = nullptr);
    backend::ScoredCompletion complete(const std::string& prompt,
                                       const backend::CompletionOptions& options,
                                       const backend::QueryHints* hints) override;
    std::string model_id() const override { return model_; }
    size_t size() const { return entries_.size(); }

private:
    std::string cache_path_;
    std::map<std::string, backend::ScoredCompletion> entries_;
    std::string model_ = "replay";
    backend::BackendPtr fallback_;
    std::mutex mutex_;
};

// Chat-completions JSON over HTTP with retry/backoff; bearer token read from
// an environment variable so credentials stay out of configs and artifacts.
class RemoteBackend : public backend::Backend {
public:
    struct Config {
        std::string endpoint;             // e.g. "http://localhost:8000"
        std::string path = "/v1/chat/completions";
        std::string model;
        std::string api_key_env = "NORMTOWN_API_KEY";
        int max_attempts = 3;
        int backoff_ms = 200;             // doubled per retry
        int timeout_sec = 120;
    };
    explicit RemoteBackend(Config config) : config_(std::move(config)) {}
    backend::ScoredCompletion complete(const std::string& prompt,
                                       const backend::CompletionOptions& options,
                                       const backend::QueryHints* hints) override;
    std::string model_id() const override { return config_.model; }

    // Request body, exposed for tests.
    json request_body(const std::string& prompt, const backend::CompletionOptions& options) const;

private:
    Config config_;
};

// ---- deciding ----------------------------------------------------------------

struct StepDecision {
    engine::Action action = engine::WaitAction{};
    int repairs = 0;          // rejected completions before success
    bool fell_back = false;   // true when the repair budget ran out
    std::vector<std::string> rejection_reasons;
};

struct ConversationDecision {
    ConversationMove move{true, ""};
    int repairs = 0;
    bool fell_back = false;
    std::vector<std::string> rejection_reasons;
};

inline constexpr int kRepairAttempts = 2;  // re-prompts after the first failure

// Render -> complete -> parse/validate, re-prompting with the rejection reason
// up to kRepairAttempts times, then coercing to Wait (steps) / Leave
// (conversations).
StepDecision decide_step(backend::Backend& backend, const PolicyContext& ctx,
                         const engine::SimState& state,
                         const backend::CompletionOptions& options);
ConversationDecision decide_conversation(backend::Backend& backend, const PolicyContext& ctx,
                                         const backend::CompletionOptions& options);

}  // namespace normtown::policy
