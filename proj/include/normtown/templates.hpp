#pragma once

#include <string>
#include <vector>

namespace normtown::policy {

// Bump whenever any template text changes: the version participates in replay
// cache keys, so stale caches miss instead of silently replaying old prompts.
inline constexpr const char* kTemplateVersion = "normtown-templates-v1";

enum class TemplateId {
    TargetStep,
    TargetConversation,
    SupportingStep,
    SupportingConversation,
    GoalGenerator,
    VerifierGoal,
    VerifierNorm,
    VerifierProfile,
    VerifierProfileAttribute,
    VerifierCoherence,
};

struct PromptTemplate {
    TemplateId id;
    std::string name;
    std::string text;
    std::vector<std::string> required;  // placeholders that must be provided
};

const PromptTemplate& get_template(TemplateId id);

// Single-pass placeholder substitution: every `{key}` occurrence whose key is
// present in `values` is replaced; other braces (JSON examples in the template
// body) pass through untouched. Throws MissingField when a key listed in
// `required` is absent from `values`.
std::string render_template(const PromptTemplate& tpl,
                            const std::vector<std::pair<std::string, std::string>>& values);

}  // namespace normtown::policy
