#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "normtown/cli.hpp"
#include "normtown/conformal.hpp"
#include "normtown/errors.hpp"
#include "normtown/util.hpp"
#include "normtown/world.hpp"

using namespace normtown;
namespace fs = std::filesystem;

namespace {

struct temp_dir {
    fs::path path;
    explicit temp_dir(const std::string& tag) {
        path = fs::temp_directory_path() / ("normtown_cli_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~temp_dir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

struct cli_result {
    int code;
    std::string out;
    std::string err;
};

cli_result run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

void expect_ok(const cli_result& r) {
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
}

// Full pipeline into dir; returns the bytes of every artifact.
std::map<std::string, std::string> pipeline(const temp_dir& dir) {
    const std::string pop = dir.file("pop.json");
    const std::string town = dir.file("town.json");
    const std::string plans = dir.file("plans.json");
    expect_ok(run({"--seed", "11", "sample-population", "--n", "40", "--out", pop}));
    expect_ok(run({"--seed", "11", "build-town", "--pop", pop, "--out", town}));
    expect_ok(run({"--seed", "11", "gen-goals", "--pop", pop, "--town", town, "--out", plans}));

    auto pop_doc = json::parse(read_file(pop));
    const std::string target = pop_doc.at("agents").at(0).at("id");
    expect_ok(run({"--seed", "11", "run-sim", "--pop", pop, "--town", town, "--plans", plans,
                   "--target", target, "--out-dir", dir.file("runs")}));
    expect_ok(run({"--seed", "11", "verify", "--trajectory",
                   dir.file("runs/" + target + ".trajectory.jsonl"), "--pop", pop, "--town", town,
                   "--plans", plans, "--judge", "scripted:rule_judge", "--out",
                   dir.file("judged.jsonl"), "--metrics", dir.file("metrics.json")}));
    expect_ok(run({"report", "--runs", dir.file("runs"), "--pop", pop, "--group-by", "location",
                   "--out", dir.file("report.csv")}));

    std::map<std::string, std::string> bytes;
    for (const char* name : {"pop.json", "town.json", "plans.json", "judged.jsonl",
                             "metrics.json", "report.csv"})
        bytes[name] = read_file(dir.file(name));
    bytes["trajectory"] = read_file(dir.file("runs/" + target + ".trajectory.jsonl"));
    bytes["run_metrics"] = read_file(dir.file("runs/" + target + ".metrics.json"));
    return bytes;
}

}  // namespace

TEST_CASE("backend specs build the right backends") {
    Rng rng(1);
    auto town = world::build_town(world::default_location_counts(), rng);

    CHECK(cli::make_backend("scripted:goal_seeker", &town, 1)->model_id() ==
          "scripted:goal_seeker");
    CHECK(cli::make_backend("scripted:chatter", nullptr, 1)->model_id() == "scripted:chatter");
    CHECK(cli::make_backend("scripted:random", nullptr, 1)->model_id() ==
          "scripted:random_agent");
    CHECK(cli::make_backend("scripted:random:123", nullptr, 1) != nullptr);
    CHECK(cli::make_backend("scripted:rule_judge", nullptr, 1) != nullptr);
    CHECK(cli::make_backend("scripted:synthetic", nullptr, 1)->model_id() ==
          "scripted:synthetic_judge");
    CHECK(cli::make_backend("scripted:synthetic:0.5", nullptr, 1) != nullptr);
    CHECK(cli::make_backend("scripted:synthetic:0.5:7", nullptr, 1) != nullptr);
    CHECK(cli::make_backend("remote:test-model", nullptr, 1)->model_id() == "test-model");
    CHECK(cli::make_backend("remote:m@http://localhost:9999", nullptr, 1)->model_id() == "m");
}

TEST_CASE("bad backend specs are rejected") {
    CHECK_THROWS_AS(cli::make_backend("scripted:goal_seeker", nullptr, 1), BadBackendSpec);
    CHECK_THROWS_AS(cli::make_backend("noscheme", nullptr, 1), BadBackendSpec);
    CHECK_THROWS_AS(cli::make_backend("bogus:x", nullptr, 1), BadBackendSpec);
    CHECK_THROWS_AS(cli::make_backend("scripted:", nullptr, 1), BadBackendSpec);
    CHECK_THROWS_AS(cli::make_backend("scripted:wizard", nullptr, 1), BadBackendSpec);
    CHECK_THROWS_AS(cli::make_backend("scripted:synthetic:1.5", nullptr, 1), BadBackendSpec);
    CHECK_THROWS_AS(cli::make_backend("scripted:random:abc", nullptr, 1), BadBackendSpec);
    CHECK_THROWS_AS(cli::make_backend("remote:@somewhere", nullptr, 1), BadBackendSpec);
    CHECK_THROWS_AS(cli::make_backend("record:/tmp/only_a_file.jsonl", nullptr, 1),
                    BadBackendSpec);
    CHECK_THROWS_AS(cli::make_backend("replay:/definitely/not/a/file.jsonl", nullptr, 1),
                    IoFailure);
}

TEST_CASE("replay and record specs chain an inner backend") {
    temp_dir dir("chain");
    auto replay = cli::make_backend("replay:" + dir.file("cache.jsonl") + ",scripted:chatter",
                                    nullptr, 1);
    CHECK(replay != nullptr);
    auto record = cli::make_backend("record:" + dir.file("rec.jsonl") + ",scripted:chatter",
                                    nullptr, 1);
    CHECK(record->model_id() == "scripted:chatter");
}

TEST_CASE("evaluate defaults to six risk levels") {
    auto grid = cli::default_epsilon_grid();
    CHECK(grid == std::vector<double>{0.05, 0.11, 0.17, 0.23, 0.29, 0.35});
}

TEST_CASE("cli rejects missing or unknown commands") {
    CHECK(run({}).code != 0);
    CHECK(run({"frobnicate"}).code != 0);
    CHECK(run({"sample-population"}).code != 0);  // --out is required
}

TEST_CASE("cli surfaces domain errors as error lines") {
    temp_dir dir("errs");
    auto r = run({"sample-population", "--n", "5", "--demographics", dir.file("absent.json"),
                  "--out", dir.file("x.json")});
    CHECK(r.code == 1);
    CHECK(r.err.rfind("error:", 0) == 0);

    write_file(dir.file("empty.json"), "[]\n");
    write_file(dir.file("pop.json"), R"({"agents": [], "households": [], "edges": []})");
    auto rep = run({"report", "--results", dir.file("empty.json"), "--pop", dir.file("pop.json"),
                    "--out", dir.file("r.csv")});
    CHECK(rep.code == 1);
    CHECK(rep.err.rfind("error:", 0) == 0);
}

TEST_CASE("config file fills option defaults") {
    temp_dir dir("config");
    write_file(dir.file("config.json"), "{\"sample-population\": {\"n\": 7}}\n");
    auto r = run({"sample-population", "--config", dir.file("config.json"), "--out",
                  dir.file("small.json")});
    expect_ok(r);
    CHECK(r.out.find("wrote 7 agents") != std::string::npos);
    auto doc = json::parse(read_file(dir.file("small.json")));
    CHECK(doc.at("agents").size() == 7);
}

TEST_CASE("pipeline runs end to end and is reproducible") {
    temp_dir first("pipe_a");
    temp_dir second("pipe_b");
    auto a = pipeline(first);
    auto b = pipeline(second);
    REQUIRE(a.size() == b.size());
    for (const auto& [name, bytes] : a) {
        CAPTURE(name);
        CHECK(bytes == b.at(name));
        CHECK(!bytes.empty());
    }

    // Sanity on the artifacts themselves.
    auto metrics = json::parse(a.at("metrics.json"));
    CHECK(metrics.at("norm_adherence").get<double>() >= 0.0);
    CHECK(metrics.at("norm_adherence").get<double>() <= 1.0);
    CHECK(a.at("report.csv").rfind("group_key,group,n,", 0) == 0);
}

TEST_CASE("calibrate and evaluate run on synthetic examples") {
    temp_dir dir("conformal");
    auto cal = run({"--seed", "3", "calibrate", "--synthetic", "60", "--backend",
                    "scripted:synthetic:0.95:3", "--epsilon", "0.3", "--k-max", "4", "--out",
                    dir.file("calib.json")});
    expect_ok(cal);
    auto doc = json::parse(read_file(dir.file("calib.json")));
    CHECK(doc.at("epsilon") == doctest::Approx(0.3));
    CHECK(doc.at("p_value").get<double>() <= conformal::kDelta);
    CHECK(doc.at("config").at("k_max") == 4);
    double stop = doc.at("config").at("lambda_stop").get<double>();
    CHECK(stop >= 0.5);
    CHECK(stop <= 0.95);

    auto ev = run({"--seed", "3", "evaluate", "--synthetic", "60", "--backend",
                   "scripted:synthetic:0.95:3", "--epsilons", "0.3", "--k-max", "4", "--out",
                   dir.file("eval.csv")});
    expect_ok(ev);
    auto text = read_file(dir.file("eval.csv"));
    CHECK(text.rfind("task,epsilon,empirical_risk,mean_set_size,mean_draws,config", 0) == 0);
    CHECK(text.find("decision_review,0.3000,") != std::string::npos);

    // A precomputed config skips per-epsilon calibration.
    auto evc = run({"--seed", "3", "evaluate", "--synthetic", "40", "--backend",
                    "scripted:synthetic:0.95:3", "--epsilons", "0.3", "--calibrated-config",
                    dir.file("calib.json"), "--format", "json", "--out", dir.file("eval.json")});
    expect_ok(evc);
    auto rows = json::parse(read_file(dir.file("eval.json")));
    REQUIRE(rows.is_array());
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].at("config").at("lambda_stop").get<double>() == doctest::Approx(stop));
}
