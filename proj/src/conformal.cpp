#include "normtown/conformal.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include "normtown/errors.hpp"
#include "normtown/policy.hpp"
#include "normtown/rng.hpp"

namespace normtown::conformal {

json CalibrationExample::to_json() const {
    return json{{"task", task}, {"input", input}, {"label", label}, {"split", split}};
}

CalibrationExample CalibrationExample::from_json(const json& j) {
    CalibrationExample e;
    e.task = j.value("task", "");
    e.input = j.at("input").get<std::string>();
    e.label = j.at("label").get<std::string>();
    e.split = j.value("split", "");
    return e;
}

json ConformalConfig::to_json() const {
    return json{{"lambda_sim", lambda_sim},
                {"lambda_qual", lambda_qual},
                {"lambda_stop", lambda_stop},
                {"k_max", k_max}};
}

ConformalConfig ConformalConfig::from_json(const json& j) {
    ConformalConfig c;
    c.lambda_sim = j.value("lambda_sim", 0.7);
    c.lambda_qual = j.value("lambda_qual", 0.0);
    c.lambda_stop = j.value("lambda_stop", 0.8);
    c.k_max = j.value("k_max", 20);
    return c;
}

double quality_score(const backend::ScoredCompletion& completion) {
    if (completion.token_logprobs.empty()) return 0.0;
    double sum = 0.0;
    for (double lp : completion.token_logprobs) sum += lp;
    return std::exp(sum / static_cast<double>(completion.token_logprobs.size()));
}

namespace {

std::vector<std::string> whitespace_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) out.push_back(std::move(tok));
    return out;
}

}  // namespace

double rouge_l(const std::string& a, const std::string& b) {
    auto ta = whitespace_tokens(a);
    auto tb = whitespace_tokens(b);
    if (ta.empty() || tb.empty()) return 0.0;
    const size_t n = ta.size(), m = tb.size();
    std::vector<size_t> prev(m + 1, 0), cur(m + 1, 0);
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j)
            cur[j] = ta[i - 1] == tb[j - 1] ? prev[j - 1] + 1
                                            : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    const double lcs = static_cast<double>(prev[m]);
    if (lcs == 0.0) return 0.0;
    const double precision = lcs / static_cast<double>(m);
    const double recall = lcs / static_cast<double>(n);
    return 2.0 * precision * recall / (precision + recall);
}

std::string extract_decision(const std::string& text) {
    auto j = policy::extract_json(text);
    if (!j || !j->is_object()) return "";
    std::string d = j->value("decision", "");
    std::transform(d.begin(), d.end(), d.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return d;
}

std::vector<Draw> draw_all(backend::Backend& backend, const CalibrationExample& example,
                           const ConformalConfig& config,
                           const backend::CompletionOptions& base_options) {
    std::vector<Draw> out;
    out.reserve(static_cast<size_t>(config.k_max));
    for (int k = 0; k < config.k_max; ++k) {
        auto options = base_options;
        options.sample_index = k;
        auto completion = backend.complete(example.input, options, nullptr);
        Draw d;
        d.text = completion.text;
        d.decision = extract_decision(completion.text);
        d.has_logprobs = !completion.token_logprobs.empty();
        d.seq_quality = quality_score(completion);
        out.push_back(std::move(d));
    }
    return out;
}

SampleResult form_set(const std::vector<Draw>& draws, const ConformalConfig& config) {
    SampleResult out;
    double best_kept_quality = -1.0;
    std::map<std::string, int> decision_counts;
    const size_t limit = std::min(draws.size(), static_cast<size_t>(config.k_max));
    for (size_t k = 0; k < limit; ++k) {
        const auto& d = draws[k];
        ++out.draws;
        ++decision_counts[d.decision];
        double quality;
        if (d.has_logprobs) {
            quality = d.seq_quality;
        } else {
            quality = static_cast<double>(decision_counts[d.decision]) /
                      static_cast<double>(k + 1);
            out.used_fallback_quality = true;
        }
        bool keep = quality >= config.lambda_qual;
        if (keep)
            for (const auto& c : out.kept)
                if (rouge_l(d.text, c.text) > config.lambda_sim) {
                    keep = false;
                    break;
                }
        if (keep) {
            out.kept.push_back(Candidate{d.text, d.decision, quality, static_cast<int>(k)});
            best_kept_quality = std::max(best_kept_quality, quality);
        }
        if (!out.kept.empty() && best_kept_quality >= config.lambda_stop) break;
    }
    return out;
}

SampleResult sample_set(backend::Backend& backend, const CalibrationExample& example,
                        const ConformalConfig& config,
                        const backend::CompletionOptions& base_options) {
    return form_set(draw_all(backend, example, config, base_options), config);
}

int set_loss(const SampleResult& result, const std::string& label) {
    for (const auto& c : result.kept)
        if (!c.decision.empty() && c.decision == label) return 0;
    return 1;
}

double hb_pvalue(double r_hat, int n, double epsilon) {
    if (n <= 0) return 1.0;
    r_hat = std::clamp(r_hat, 0.0, 1.0);
    epsilon = std::clamp(epsilon, 1e-12, 1.0 - 1e-12);

    auto kl = [](double p, double q) {
        double out = 0.0;
        if (p > 0.0) out += p * std::log(p / q);
        if (p < 1.0) out += (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
        return out;
    };
    const double hoeffding = std::exp(-static_cast<double>(n) * kl(std::min(r_hat, epsilon), epsilon));

    int k = static_cast<int>(std::ceil(static_cast<double>(n) * r_hat - 1e-9));
    k = std::clamp(k, 0, n);
    double cdf = 0.0;
    for (int i = 0; i <= k; ++i) {
        const double log_term = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                                std::lgamma(n - i + 1.0) + i * std::log(epsilon) +
                                (n - i) * std::log1p(-epsilon);
        cdf += std::exp(log_term);
    }
    const double bentkus = std::exp(1.0) * std::min(cdf, 1.0);
    return std::min(1.0, std::min(hoeffding, bentkus));
}

std::vector<double> default_lambda_grid() {
    return {0.95, 0.90, 0.85, 0.80, 0.75, 0.70, 0.65, 0.60, 0.55, 0.50};
}

CalibrationResult calibrate(const std::vector<std::vector<Draw>>& calibration_draws,
                            const std::vector<std::string>& calibration_labels, double epsilon,
                            double delta, const std::vector<double>& lambda_grid,
                            ConformalConfig base) {
    if (calibration_draws.empty() || calibration_draws.size() != calibration_labels.size())
        throw NoValidConfig("calibration needs matching draws and labels");
    for (size_t i = 1; i < lambda_grid.size(); ++i)
        if (lambda_grid[i] >= lambda_grid[i - 1])
            throw NoValidConfig("lambda_stop grid must be strictly descending");

    const int n = static_cast<int>(calibration_draws.size());
    bool any = false;
    CalibrationResult best;
    for (size_t g = 0; g < lambda_grid.size(); ++g) {
        ConformalConfig config = base;
        config.lambda_stop = lambda_grid[g];
        double losses = 0.0;
        for (size_t i = 0; i < calibration_draws.size(); ++i)
            losses += set_loss(form_set(calibration_draws[i], config), calibration_labels[i]);
        const double r_hat = losses / static_cast<double>(n);
        const double p = hb_pvalue(r_hat, n, epsilon);
        if (p > delta) break;  // fixed sequence: stop at the first failure
        best = CalibrationResult{config, r_hat, p, static_cast<int>(g)};
        any = true;
    }
    if (!any)
        throw NoValidConfig("no lambda_stop in the grid certifies risk <= " +
                            std::to_string(epsilon));
    return best;
}

EvalResult evaluate(const std::vector<std::vector<Draw>>& draws,
                    const std::vector<std::string>& labels, const ConformalConfig& config) {
    EvalResult out;
    out.n = static_cast<int>(draws.size());
    if (draws.empty() || draws.size() != labels.size()) return out;
    for (size_t i = 0; i < draws.size(); ++i) {
        auto result = form_set(draws[i], config);
        out.empirical_risk += set_loss(result, labels[i]);
        out.mean_set_size += static_cast<double>(result.kept.size());
        out.mean_draws += result.draws;
    }
    out.empirical_risk /= out.n;
    out.mean_set_size /= out.n;
    out.mean_draws /= out.n;
    return out;
}

std::vector<CalibrationExample> make_synthetic_examples(int n, uint64_t seed,
                                                        int n_calibration) {
    static const char* kTopics[] = {
        "a refund request after a late delivery",  "a dispute over a gym membership fee",
        "a complaint about restaurant service",    "a warranty claim for a broken phone",
        "an appeal of a parking fine",             "a request to reschedule a clinic visit",
    };
    Rng rng(seed);
    std::vector<CalibrationExample> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const bool yes = rng.bernoulli(0.5);
        CalibrationExample e;
        e.task = "decision_review";
        e.label = yes ? "yes" : "no";
        e.input = "Decision review case " + std::to_string(i + 1) + ": evaluate " +
                  kTopics[rng.next_below(6)] +
                  ". Reply with a JSON object {\"rationale\": \"...\", \"decision\": "
                  "\"yes\" or \"no\"}. Reference note: true_decision=" +
                  e.label + ".";
        e.split = i < n_calibration ? "calibration" : "test";
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace normtown::conformal
