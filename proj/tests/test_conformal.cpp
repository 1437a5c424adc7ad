#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "normtown/conformal.hpp"
#include "normtown/errors.hpp"
#include "normtown/policy.hpp"
#include "normtown/scripted.hpp"

using namespace normtown;
using namespace normtown::conformal;

namespace {

Draw make_draw(const std::string& text, const std::string& decision, double quality,
               bool has_logprobs = true) {
    return Draw{text, decision, quality, has_logprobs};
}

std::vector<std::vector<Draw>> draws_for(backend::Backend& backend,
                                         const std::vector<CalibrationExample>& examples,
                                         const ConformalConfig& config) {
    backend::CompletionOptions options;
    options.want_logprobs = true;
    std::vector<std::vector<Draw>> out;
    for (const auto& ex : examples) out.push_back(draw_all(backend, ex, config, options));
    return out;
}

std::vector<std::string> labels_of(const std::vector<CalibrationExample>& examples) {
    std::vector<std::string> out;
    for (const auto& ex : examples) out.push_back(ex.label);
    return out;
}

}  // namespace

TEST_CASE("rouge_l matches the hand-computed F1") {
    // LCS("the cat sat", "the cat ran") = "the cat" = 2 tokens of 3 each side.
    double f1 = rouge_l("the cat sat", "the cat ran");
    double p = 2.0 / 3.0, r = 2.0 / 3.0;
    CHECK(f1 == doctest::Approx(2 * p * r / (p + r)).epsilon(1e-9));

    CHECK(rouge_l("same words here", "same words here") == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rouge_l("alpha beta", "gamma delta") == doctest::Approx(0.0));
    CHECK(rouge_l("", "anything") == doctest::Approx(0.0));
    CHECK(rouge_l("anything", "") == doctest::Approx(0.0));

    // Symmetric in its arguments and bounded by [0, 1].
    double ab = rouge_l("a b c d", "b d");
    double ba = rouge_l("b d", "a b c d");
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(ab > 0.0);
    CHECK(ab <= 1.0);
    // LCS = "b d" (2): P = 2/2 over "b d", R = 2/4, F1 = 2*(1)(0.5)/1.5.
    CHECK(ab == doctest::Approx(2 * 1.0 * 0.5 / 1.5).epsilon(1e-9));
}

TEST_CASE("quality_score is the exponentiated mean logprob") {
    backend::ScoredCompletion c;
    c.token_logprobs = {-1.0, -1.0};
    CHECK(quality_score(c) == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));

    c.token_logprobs = {std::log(0.25), std::log(0.81)};
    CHECK(quality_score(c) ==
          doctest::Approx(std::exp((std::log(0.25) + std::log(0.81)) / 2.0)).epsilon(1e-9));

    c.token_logprobs = {};
    CHECK(quality_score(c) == doctest::Approx(0.0));
}

TEST_CASE("extract_decision lowercases the decision field") {
    CHECK(extract_decision(R"(prose {"rationale": "fine", "decision": "YES"} more)") == "yes");
    CHECK(extract_decision(R"({"decision": "No"})") == "no");
    CHECK(extract_decision(R"({"verdict": "yes"})") == "");
    CHECK(extract_decision("not json") == "");
}

TEST_CASE("hb_pvalue behaves like a p-value should") {
    // Zero empirical risk over 200 examples at eps 0.05: certifiable far below 0.1.
    double p = hb_pvalue(0.0, 200, 0.05);
    CHECK(p <= std::exp(1.0) * std::pow(0.95, 200) + 1e-9);
    CHECK(p < 0.01);

    // Monotone: more observed risk, larger p.
    CHECK(hb_pvalue(0.00, 200, 0.05) <= hb_pvalue(0.02, 200, 0.05));
    CHECK(hb_pvalue(0.02, 200, 0.05) <= hb_pvalue(0.04, 200, 0.05));
    CHECK(hb_pvalue(0.04, 200, 0.05) <= hb_pvalue(0.06, 200, 0.05));

    // More data with the same rate tightens the bound.
    CHECK(hb_pvalue(0.02, 400, 0.05) <= hb_pvalue(0.02, 100, 0.05));

    // At or above the target rate nothing is certified.
    CHECK(hb_pvalue(0.05, 200, 0.05) > 0.3);
    CHECK(hb_pvalue(0.20, 200, 0.05) == doctest::Approx(1.0));
    CHECK(hb_pvalue(0.0, 0, 0.05) == doctest::Approx(1.0));

    // Always a probability.
    for (double r : {0.0, 0.1, 0.5, 1.0})
        for (int n : {1, 10, 1000}) {
            double v = hb_pvalue(r, n, 0.2);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
}

TEST_CASE("form_set keeps the first of near-duplicate candidates") {
    ConformalConfig config;
    config.lambda_sim = 0.7;
    config.lambda_qual = 0.0;
    config.lambda_stop = 2.0;  // never stop early; exhaust all draws
    config.k_max = 4;

    std::vector<Draw> draws = {
        make_draw("the refund is approved because the receipt is valid", "yes", 0.9),
        make_draw("the refund is approved because the receipt is valid today", "yes", 0.8),
        make_draw("deny it since the warranty lapsed", "no", 0.7),
        make_draw("completely different reasoning text", "yes", 0.6),
    };
    auto result = form_set(draws, config);
    CHECK(result.draws == 4);
    REQUIRE(result.kept.size() == 3);  // the near-duplicate second draw was rejected
    CHECK(result.kept[0].draw_index == 0);
    CHECK(result.kept[1].draw_index == 2);
    CHECK(result.kept[2].draw_index == 3);
    CHECK_FALSE(result.used_fallback_quality);
}

TEST_CASE("form_set drops low-quality candidates") {
    ConformalConfig config;
    config.lambda_qual = 0.5;
    config.lambda_stop = 2.0;
    config.k_max = 3;

    std::vector<Draw> draws = {
        make_draw("alpha alpha alpha", "yes", 0.4),  // below the quality floor
        make_draw("beta beta beta", "no", 0.6),
        make_draw("gamma gamma gamma", "yes", 0.45),
    };
    auto result = form_set(draws, config);
    REQUIRE(result.kept.size() == 1);
    CHECK(result.kept[0].decision == "no");
    CHECK(result.draws == 3);
}

TEST_CASE("form_set stops once a kept candidate is good enough") {
    ConformalConfig config;
    config.lambda_stop = 0.8;
    config.k_max = 10;

    std::vector<Draw> draws = {
        make_draw("first answer text", "yes", 0.85),
        make_draw("second answer text", "no", 0.99),  // never reached
    };
    auto result = form_set(draws, config);
    CHECK(result.draws == 1);
    REQUIRE(result.kept.size() == 1);
    CHECK(result.kept[0].decision == "yes");

    // A lower bar stops at the same place; a higher bar keeps drawing.
    config.lambda_stop = 0.99;
    result = form_set(draws, config);
    CHECK(result.draws == 2);
    CHECK(result.kept.size() == 2);
}

TEST_CASE("raising lambda_stop only grows the kept set") {
    // Nestedness over a pile of deterministic draws.
    Rng rng(5);
    const char* words[] = {"alpha", "beta", "gamma", "delta", "epsilon", "zeta"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Draw> draws;
        int k = static_cast<int>(rng.uniform_int(1, 12));
        for (int i = 0; i < k; ++i) {
            std::string text;
            int len = static_cast<int>(rng.uniform_int(2, 6));
            for (int t = 0; t < len; ++t)
                text += std::string(t ? " " : "") + words[rng.next_below(6)];
            draws.push_back(make_draw(text, rng.bernoulli(0.5) ? "yes" : "no",
                                      rng.next_double(), true));
        }
        ConformalConfig low, high;
        low.lambda_stop = 0.5;
        high.lambda_stop = 0.9;
        auto small = form_set(draws, low);
        auto large = form_set(draws, high);
        CHECK(small.draws <= large.draws);
        CHECK(small.kept.size() <= large.kept.size());
        // Everything kept at the small setting appears in the larger set.
        std::set<int> large_indices;
        for (const auto& c : large.kept) large_indices.insert(c.draw_index);
        for (const auto& c : small.kept) CHECK(large_indices.count(c.draw_index) == 1);
    }
}

TEST_CASE("draws without logprobs fall back to agreement frequency") {
    ConformalConfig config;
    config.lambda_stop = 2.0;
    config.k_max = 4;

    std::vector<Draw> draws = {
        make_draw("one of a kind", "yes", 0.0, false),
        make_draw("another opinion entirely", "no", 0.0, false),
        make_draw("third view stated differently", "yes", 0.0, false),
        make_draw("fourth take on the matter", "yes", 0.0, false),
    };
    auto result = form_set(draws, config);
    CHECK(result.used_fallback_quality);
    REQUIRE(result.kept.size() == 4);
    // k-th draw of a decision seen m times so far scores m / (k + 1).
    CHECK(result.kept[0].quality == doctest::Approx(1.0 / 1.0));
    CHECK(result.kept[1].quality == doctest::Approx(1.0 / 2.0));
    CHECK(result.kept[2].quality == doctest::Approx(2.0 / 3.0));
    CHECK(result.kept[3].quality == doctest::Approx(3.0 / 4.0));
}

TEST_CASE("set_loss checks for the admissible decision") {
    SampleResult result;
    result.kept.push_back(Candidate{"text", "yes", 0.9, 0});
    result.kept.push_back(Candidate{"text2", "no", 0.8, 1});
    CHECK(set_loss(result, "yes") == 0);
    CHECK(set_loss(result, "no") == 0);
    result.kept.pop_back();
    CHECK(set_loss(result, "no") == 1);

    SampleResult empty;
    CHECK(set_loss(empty, "yes") == 1);

    SampleResult undecided;
    undecided.kept.push_back(Candidate{"prose with no verdict", "", 0.9, 0});
    CHECK(set_loss(undecided, "yes") == 1);
}

TEST_CASE("default lambda grid descends from 0.95 to 0.50") {
    auto grid = default_lambda_grid();
    REQUIRE(grid.size() == 10);
    CHECK(grid.front() == doctest::Approx(0.95));
    CHECK(grid.back() == doctest::Approx(0.50));
    for (size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] < grid[i - 1]);
}

TEST_CASE("synthetic examples embed their labels and split cleanly") {
    auto examples = make_synthetic_examples(100, 42, 60);
    REQUIRE(examples.size() == 100);
    int calibration = 0;
    for (size_t i = 0; i < examples.size(); ++i) {
        const auto& ex = examples[i];
        CHECK(ex.task == "decision_review");
        CHECK((ex.label == "yes" || ex.label == "no"));
        CHECK(ex.input.find("true_decision=" + ex.label) != std::string::npos);
        if (ex.split == "calibration") {
            ++calibration;
            CHECK(i < 60);
        } else {
            CHECK(ex.split == "test");
        }
    }
    CHECK(calibration == 60);

    auto again = make_synthetic_examples(100, 42, 60);
    for (size_t i = 0; i < examples.size(); ++i) {
        CHECK(again[i].input == examples[i].input);
        CHECK(again[i].label == examples[i].label);
    }
    CHECK(CalibrationExample::from_json(examples[0].to_json()).to_json() ==
          examples[0].to_json());
}

TEST_CASE("calibrate walks the grid and certifies the last safe setting") {
    auto judge = scripted::synthetic_judge(0.9, 7);
    auto examples = make_synthetic_examples(240, 11, 200);
    std::vector<CalibrationExample> calibration(examples.begin(), examples.begin() + 200);

    ConformalConfig base;
    base.k_max = 8;
    auto draws = draws_for(*judge, calibration, base);
    auto labels = labels_of(calibration);

    auto result = calibrate(draws, labels, 0.2, kDelta, default_lambda_grid(), base);
    CHECK(result.p_value <= kDelta);
    CHECK(result.r_hat <= 0.2);
    CHECK(result.grid_index >= 0);
    CHECK(result.config.lambda_stop == doctest::Approx(default_lambda_grid()
                                                           [static_cast<size_t>(
                                                               result.grid_index)]));
    CHECK(result.config.k_max == 8);  // base carried through

    // The certified setting generalizes to held-out examples at this epsilon.
    std::vector<CalibrationExample> test(examples.begin() + 200, examples.end());
    auto test_draws = draws_for(*judge, test, base);
    auto eval = evaluate(test_draws, labels_of(test), result.config);
    CHECK(eval.n == 40);
    CHECK(eval.mean_set_size >= 1.0);
    CHECK(eval.mean_draws <= 8.0);

    // An impossible risk target leaves nothing to certify.
    CHECK_THROWS_AS(calibrate(draws, labels, 0.0005, kDelta, default_lambda_grid(), base),
                    NoValidConfig);

    CHECK_THROWS_AS(calibrate({}, {}, 0.2, kDelta, default_lambda_grid(), base),
                    NoValidConfig);
    CHECK_THROWS_AS(calibrate(draws, labels, 0.2, kDelta, {0.5, 0.9}, base), NoValidConfig);
}

TEST_CASE("a vacuous risk target certifies the cheapest grid point") {
    auto judge = scripted::synthetic_judge(0.95, 3);
    auto examples = make_synthetic_examples(120, 5, 120);
    ConformalConfig base;
    base.k_max = 6;
    auto draws = draws_for(*judge, examples, base);
    auto result = calibrate(draws, labels_of(examples), 0.9999, kDelta,
                            default_lambda_grid(), base);
    auto grid = default_lambda_grid();
    CHECK(result.grid_index == static_cast<int>(grid.size()) - 1);
    CHECK(result.config.lambda_stop == doctest::Approx(grid.back()));
}

TEST_CASE("evaluate reports means over the supplied draws") {
    ConformalConfig config;
    config.lambda_stop = 2.0;
    config.k_max = 2;

    std::vector<std::vector<Draw>> draws = {
        {make_draw("completely unique phrasing", "yes", 0.9),
         make_draw("utterly distinct wording", "no", 0.8)},
        {make_draw("single candidate text", "no", 0.7)},
    };
    std::vector<std::string> labels = {"yes", "yes"};
    auto eval = evaluate(draws, labels, config);
    CHECK(eval.n == 2);
    CHECK(eval.empirical_risk == doctest::Approx(0.5));  // second example misses "yes"
    CHECK(eval.mean_set_size == doctest::Approx((2 + 1) / 2.0));
    CHECK(eval.mean_draws == doctest::Approx((2 + 1) / 2.0));
}

TEST_CASE("the synthetic judge answers by its admissibility") {
    auto examples = make_synthetic_examples(200, 21, 200);
    backend::CompletionOptions options;
    options.want_logprobs = true;

    for (double admissibility : {1.0, 0.0}) {
        auto judge = scripted::synthetic_judge(admissibility, 9);
        int correct = 0;
        for (const auto& ex : examples) {
            auto completion = judge->complete(ex.input, options, nullptr);
            if (extract_decision(completion.text) == ex.label) ++correct;
            REQUIRE(completion.token_logprobs.size() == 1);
            double q = std::exp(completion.token_logprobs[0]);
            CHECK(q > 0.0);
            CHECK(q < 1.0);
        }
        if (admissibility == 1.0) CHECK(correct == 200);
        if (admissibility == 0.0) CHECK(correct == 0);
    }

    // Independent draws across sample_index: not all 20 samples identical.
    auto judge = scripted::synthetic_judge(0.5, 13);
    std::set<std::string> distinct;
    for (int k = 0; k < 20; ++k) {
        auto opts = options;
        opts.sample_index = k;
        distinct.insert(judge->complete(examples[0].input, opts, nullptr).text);
    }
    CHECK(distinct.size() > 1);
}
