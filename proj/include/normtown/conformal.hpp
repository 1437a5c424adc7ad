#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "normtown/backend.hpp"
#include "normtown/util.hpp"

namespace normtown::conformal {

// Risk-level confidence for calibration certificates (delta).
inline constexpr double kDelta = 0.1;

struct CalibrationExample {
    std::string task;
    std::string input;  // full judge prompt
    std::string label;  // admissible decision ("yes" / "no")
    std::string split;  // "calibration" | "test"

    json to_json() const;
    static CalibrationExample from_json(const json& j);
};

struct ConformalConfig {
    double lambda_sim = 0.7;   // reject candidates more ROUGE-similar than this
    double lambda_qual = 0.0;  // reject candidates below this quality
    double lambda_stop = 0.8;  // stop once the best kept quality reaches this
    int k_max = 20;

    json to_json() const;
    static ConformalConfig from_json(const json& j);
};

struct Candidate {
    std::string text;
    std::string decision;
    double quality = 0.0;
    int draw_index = 0;
};

struct SampleResult {
    std::vector<Candidate> kept;
    int draws = 0;
    bool used_fallback_quality = false;
};

// One raw completion, decoupled from thresholds so threshold sweeps can reuse
// the same draws.
struct Draw {
    std::string text;
    std::string decision;
    double seq_quality = 0.0;  // exp(mean token logprob) when logprobs exist
    bool has_logprobs = false;
};

// exp(mean token logprob); 0 when the completion carries no logprobs.
double quality_score(const backend::ScoredCompletion& completion);

// ROUGE-L F1 over whitespace tokens; 0 when either side has no tokens.
double rouge_l(const std::string& a, const std::string& b);

// Lowercased "decision" field of the first JSON object in the text, or "".
std::string extract_decision(const std::string& text);

// k_max completions for one example (sample_index 0..k_max-1).
std::vector<Draw> draw_all(backend::Backend& backend, const CalibrationExample& example,
                           const ConformalConfig& config,
                           const backend::CompletionOptions& base_options);

// Replays the keep/reject/stop walk over recorded draws. Draws without
// logprobs fall back to decision-agreement frequency among the draws so far
// (flagged in the result). Stops once some kept candidate's quality reaches
// lambda_stop, so raising lambda_stop never shrinks the set.
SampleResult form_set(const std::vector<Draw>& draws, const ConformalConfig& config);

SampleResult sample_set(backend::Backend& backend, const CalibrationExample& example,
                        const ConformalConfig& config,
                        const backend::CompletionOptions& base_options);

// 1 when no kept candidate matches the admissible label.
int set_loss(const SampleResult& result, const std::string& label);

// Hoeffding-Bentkus upper-tail p-value for H0: risk > epsilon given empirical
// risk r_hat on n examples.
double hb_pvalue(double r_hat, int n, double epsilon);

// Descending lambda_stop grid used when the caller does not supply one.
std::vector<double> default_lambda_grid();

struct CalibrationResult {
    ConformalConfig config;
    double r_hat = 0.0;
    double p_value = 1.0;
    int grid_index = 0;  // index in the descending grid that was certified
};

// Fixed-sequence walk over a descending lambda_stop grid: starts at the most
// conservative setting, keeps walking while each setting's p-value stays
// within delta, and returns the last certified one. Throws NoValidConfig when
// even the first grid point fails.
CalibrationResult calibrate(const std::vector<std::vector<Draw>>& calibration_draws,
                            const std::vector<std::string>& calibration_labels, double epsilon,
                            double delta, const std::vector<double>& lambda_grid,
                            ConformalConfig base);

struct EvalResult {
    double empirical_risk = 0.0;
    double mean_set_size = 0.0;
    double mean_draws = 0.0;
    int n = 0;
};

EvalResult evaluate(const std::vector<std::vector<Draw>>& draws,
                    const std::vector<std::string>& labels, const ConformalConfig& config);

// Synthetic decision-review examples whose inputs embed the admissible label
// as a "true_decision=..." marker; the first n_calibration get the
// calibration split.
std::vector<CalibrationExample> make_synthetic_examples(int n, uint64_t seed,
                                                        int n_calibration);

}  // namespace normtown::conformal
