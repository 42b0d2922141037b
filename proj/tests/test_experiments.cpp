#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "moran/experiments.hpp"
#include "moran/hash.hpp"

using namespace moran;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("moran_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string message_of(const std::string& json) {
    try {
        parse_config(json);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("experiment names round-trip") {
    CHECK(all_experiments().size() == 7);
    for (ExperimentKind k : all_experiments()) CHECK(parse_experiment(experiment_name(k)) == k);
    CHECK_THROWS_AS(parse_experiment("nope"), ValidationError);
}

TEST_CASE("config parsing") {
    const ExperimentConfig c = parse_config(R"({
        "experiment": "survival-table",
        "model": {"N": 7, "d": 2, "B": 1.5, "b0": 0.3, "S": 2},
        "t_grid": {"from": 0, "to": 1, "step": 0.25},
        "mode": "finite", "seed": 9, "mu": "stationary"})");
    CHECK(c.model.N == 7);
    CHECK(c.model.b0() == doctest::Approx(0.3));
    CHECK(c.model.b1() == doctest::Approx(0.7));
    CHECK(c.model.chi(1) == 1.0);
    CHECK(c.tGrid.size() == 5);
    CHECK(c.tGrid.back() == doctest::Approx(1.0));
    CHECK(c.mode == ChainMode::FiniteN);
    CHECK(c.seed == 9);
    CHECK(c.stationaryStart);
    CHECK(c.canonical() == parse_config(c.canonical()).canonical());

    const ExperimentConfig d = parse_config(R"({"model": {"d": 3, "b": [0.2,0.3,0.5, 0.1,0.1,0.8, 0.3,0.3,0.4],
                                                "chi": [0, 0.2, 1]}, "t_grid": [0.1, 0.2]})");
    CHECK(d.model.b(1, 2) == doctest::Approx(0.8));
    CHECK(d.model.chi(1) == doctest::Approx(0.2));
}

TEST_CASE("config errors name the offending key") {
    CHECK(message_of("{") .find("not valid JSON") != std::string::npos);
    CHECK(message_of("[1]").find("JSON object") != std::string::npos);
    CHECK(message_of(R"({"model": {"N": "ten"}})").find("'N'") != std::string::npos);
    CHECK(message_of(R"({"model": {"b": [0.5, 0.5, 0.2, 0.7]}})").find("row not stochastic") != std::string::npos);
    CHECK(message_of(R"({"model": {"b": [1, 0, 0]}})").find("'model.b'") != std::string::npos);
    CHECK(message_of(R"({"model": {"S": 50, "N": 10}})").find("selection out of range") != std::string::npos);
    CHECK(message_of(R"({"model": {"chi": [0, 0.5]}})").find("chi") != std::string::npos);
    CHECK(message_of(R"({"experiment": "bogus"})").find("'experiment'") != std::string::npos);
    CHECK(message_of(R"({"t_grid": [0.5, 0.2]})").find("'t_grid'") != std::string::npos);
    CHECK(message_of(R"({"t_grid": {"to": 1, "step": 0}})").find("'t_grid'") != std::string::npos);
    CHECK(message_of(R"({"t_grid": []})").find("'t_grid'") != std::string::npos);
    CHECK(message_of(R"({"replicates": 0})").find("'replicates'") != std::string::npos);
    CHECK(message_of(R"({"workers": 0})").find("'workers'") != std::string::npos);
    CHECK(message_of(R"({"T": -1})").find("'T'") != std::string::npos);
    CHECK(message_of(R"({"mode": "huge"})").find("'mode'") != std::string::npos);
    CHECK(message_of(R"({"mu": "other"})").find("'mu'") != std::string::npos);
    CHECK(message_of(R"({"nu": [0.2, 0.2]})").find("'nu'") != std::string::npos);
    CHECK(message_of(R"({"experiment": "conditioned-distance", "xi": [0, 5]})").find("'xi'") != std::string::npos);
    CHECK(message_of(R"({"experiment": "conditioned-distance", "T": 1, "t_grid": [2]})").find("'t_grid'") !=
          std::string::npos);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ValidationError);
}

TEST_CASE("plot data") {
    std::ostringstream os;
    emit_plotdata(os, {{"a", {0, 1}, {2, 3}}, {"b", {}, {}}});
    CHECK(os.str() == "series,x,y\na,0,2\na,1,3\n");
    std::ostringstream bad;
    CHECK_THROWS_AS(emit_plotdata(bad, {}), ValidationError);
    CHECK_THROWS_AS(emit_plotdata(bad, {{"a", {}, {}}}), ValidationError);
    CHECK_THROWS_AS(emit_plotdata(bad, {{"a", {0, 1}, {2}}}), ValidationError);

    CatEquilibrium eq;
    eq.marginal << 0.25, 0.75;
    const auto s = plot_series(eq);
    REQUIRE(s.size() == 1);
    CHECK(s[0].y[1] == 0.75);
}

TEST_CASE("runs are deterministic and independent of the worker count") {
    ExperimentConfig c = parse_config(R"({"experiment": "forward-distance",
        "model": {"N": 6, "B": 0.5, "S": 1}, "T": 1.5, "t_grid": [0.25, 0.5, 1.0],
        "replicates": 400, "seed": 77, "write_samples": true})");
    c.out = scratch("det1").string();
    const RunManifest a = run_experiment(c);
    c.out = scratch("det2").string();
    c.workers = 3;
    const RunManifest b = run_experiment(c);
    REQUIRE(a.outputs.size() == 2);
    REQUIRE(b.outputs.size() == 2);
    for (std::size_t k = 0; k < a.outputs.size(); ++k) {
        CHECK(a.outputs[k].name == b.outputs[k].name);
        CHECK(a.outputs[k].checksum == b.outputs[k].checksum);
    }
    CHECK(a.configHash == b.configHash);  // workers and out do not enter the hash
    c.seed = 78;
    c.out = scratch("det3").string();
    CHECK(run_experiment(c).outputs[0].checksum != a.outputs[0].checksum);

    const std::string manifest = slurp(fs::path(c.out) / "manifest.csv");
    CHECK(manifest.rfind("kind,name,value\nmeta,config_hash,", 0) == 0);
    CHECK(manifest.find("output,forward_distance.csv,") != std::string::npos);
    CHECK(slurp(fs::path(c.out) / "events_replicate0.csv").rfind("time,kind,src,dst_or_new_type", 0) == 0);
}

TEST_CASE("a failed run leaves no manifest") {
    ExperimentConfig c = parse_config(R"({"experiment": "cat-equilibrium", "model": {"N": 5, "S": 1}})");
    c.out = scratch("fail").string();
    run_experiment(c);
    CHECK(fs::exists(fs::path(c.out) / "manifest.csv"));
    c.nMax = 4096;  // above the doubling cap
    CHECK_THROWS_AS(run_experiment(c), NumericalError);
    CHECK_FALSE(fs::exists(fs::path(c.out) / "manifest.csv"));
}

TEST_CASE("every experiment runs on a small model") {
    const std::vector<std::string> configs{
        R"({"experiment": "duality-sweep", "model": {"N": 2, "d": 3, "S": 1}, "replicates": 5,
            "t_grid": [0.5, 1], "randomize_params": true})",
        R"({"experiment": "conditioned-distance", "model": {"N": 3, "B": 0.5, "S": 1}, "T": 1,
            "t_grid": [0.5, 1], "replicates": 50, "xi": [1, 1], "write_samples": true})",
        R"({"experiment": "cat-equilibrium", "model": {"N": 6, "S": 2}, "mode": "finite"})",
        R"({"experiment": "survival-table", "model": {"N": 6, "S": 0}, "mode": "finite", "t_grid": [0, 1]})",
        R"({"experiment": "survival-table", "model": {"N": 6, "S": 1}, "t_grid": [0, 1]})",
        R"({"experiment": "taylor-report", "model": {"N": 6, "S": 1}})",
        R"({"experiment": "cross-check", "model": {"N": 3, "S": 1}, "t_grid": [0.5]})",
    };
    int idx = 0;
    for (const auto& text : configs) {
        ExperimentConfig c = parse_config(text);
        c.out = scratch("all" + std::to_string(idx++)).string();
        INFO(text);
        const RunManifest m = run_experiment(c);
        CHECK_FALSE(m.outputs.empty());
        for (const auto& o : m.outputs) {
            const std::string body = slurp(fs::path(c.out) / o.name);
            CHECK(body.size() == o.bytes);
            CHECK(fnv1a(body) == o.checksum);
            CHECK_FALSE(fs::exists(fs::path(c.out) / (o.name + ".tmp")));
        }
        if (c.experiment == ExperimentKind::DualitySweep) {
            std::istringstream is(slurp(fs::path(c.out) / "duality.csv"));
            std::string line;
            std::getline(is, line);
            int rows = 0;
            while (std::getline(is, line)) {
                CHECK(std::stod(line.substr(line.rfind(',') + 1)) < 1e-9);
                ++rows;
            }
            CHECK(rows == 10);
        }
        if (c.experiment == ExperimentKind::SurvivalTable && c.model.S == 0) {
            std::istringstream is(slurp(fs::path(c.out) / "closed_form.csv"));
            std::string line;
            std::getline(is, line);
            while (std::getline(is, line)) CHECK(std::stod(line.substr(line.rfind(',') + 1)) < 1e-9);
        }
    }
}

TEST_CASE("Monte Carlo survival estimators") {
    const ModelParams p = ModelParams::two_type(8, 0.0, 0.5, 0.0);
    const SurvivalEstimate f = forward_distance_survival(p, Eigen::Vector2d(0.5, 0.5), 2.0, {0.5, 1.0, 2.5}, 20000, 3, 2);
    CHECK(std::abs(f.estimate[0] - std::exp(-0.5)) < 3 * f.se[0]);
    CHECK(std::abs(f.estimate[1] - std::exp(-1.0)) < 3 * f.se[1]);
    CHECK(f.estimate[2] == 0.0);
    CHECK_THROWS_AS(forward_distance_survival(p, Eigen::Vector3d(0.3, 0.3, 0.4), 1, {0.5}, 10, 1, 1), ValidationError);

    const ModelParams q = ModelParams::two_type(4, 0.0, 0.5, 0.0);
    const TimeSpacePotential h(q, product_law(4, Eigen::Vector2d(0.5, 0.5)), 2.0);
    const SurvivalEstimate same = conditioned_distance_survival(q, {0, 0}, 2.0, h, {0.5, 1.0}, 20000, 4, 1);
    const double e2 = std::exp(-2.0) / 2;
    for (std::size_t k = 0; k < 2; ++k) {
        const double t = same.t[k];
        const double target = (std::exp(-t) - e2) / (1 - e2);
        CHECK(std::abs(same.estimate[k] - target) < 3 * same.se[k]);
    }
    const SurvivalEstimate diff = conditioned_distance_survival(q, {0, 1}, 2.0, h, {0.5, 1.9}, 500, 5, 1);
    CHECK(diff.estimate[0] == 1.0);
    CHECK(diff.estimate[1] == 1.0);
}

TEST_CASE("random duality cases") {
    const ModelParams base = ModelParams::neutral(3, 3, 1.0);
    for (int k = 0; k < 50; ++k) {
        Rng rng(6, k);
        const DualityCase c = random_duality_case(base, true, rng);
        c.eta.check();
        CHECK(c.mu.size() == 27);
        CHECK(c.mu.sum() == doctest::Approx(1.0));
        CHECK(c.mu.minCoeff() > 0);
        validate_params(c.params);
    }
}

TEST_CASE("coalescence time of a path") {
    const ModelParams p = ModelParams::neutral(3, 2, 0.0);
    const BpState split = canonical_start(p, {0, 1}, {0, 0});
    BpState merged = split;
    merged.marks[0] = merged.marks[1];
    merged.canonicalize();
    CHECK(std::isinf(coalescence_time(BpPath{split, {}, 1.0})));
    CHECK(coalescence_time(BpPath{split, {{0.4, BpKind::K2ai, merged}}, 1.0}) == 0.4);
    CHECK(coalescence_time(BpPath{merged, {}, 1.0}) == 0.0);
}
