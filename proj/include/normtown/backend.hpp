#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "normtown/util.hpp"

namespace normtown::policy {
struct PolicyContext;
}
namespace normtown::verifier {
struct VerifierContext;
}

namespace normtown::backend {

struct CompletionOptions {
    double temperature = 0.0;
    double top_p = 1.0;
    int top_k = 0;       // 0 = provider default
    double min_p = 0.0;
    int max_tokens = 1024;
    bool want_logprobs = true;
    uint64_t seed = 0;       // forwarded to scripted programs for determinism
    int sample_index = 0;    // distinguishes repeated draws over one prompt

    json to_json() const;  // canonical form used in cache keys
};

struct ScoredCompletion {
    std::string text;
    std::vector<double> token_logprobs;  // empty when the provider gave none
    std::string finish_reason = "stop";
};

// Structured context handed to scripted backends alongside the rendered
// prompt; remote and replay backends ignore it.
struct QueryHints {
    const policy::PolicyContext* policy_ctx = nullptr;
    const verifier::VerifierContext* verifier_ctx = nullptr;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual ScoredCompletion complete(const std::string& prompt, const CompletionOptions& options,
                                      const QueryHints* hints = nullptr) = 0;
    virtual std::string model_id() const = 0;
};

using BackendPtr = std::shared_ptr<Backend>;

}  // namespace normtown::backend
