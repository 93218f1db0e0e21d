#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hetgp/errors.hpp"
#include "hetgp/experiments.hpp"
#include "hetgp/io.hpp"

using namespace hetgp;
using nlohmann::json;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("hetgp_exp_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

ExperimentConfig make(const std::string& experiment, const std::string& dir) {
    ExperimentConfig c;
    c.experiment = experiment;
    c.output_dir = fresh_dir(dir);
    return c;
}

}  // namespace

TEST_CASE("override merging") {
    ExperimentConfig c;
    c.experiment = "motivating";
    c.overrides = json{{"sigma0_sq", 2}, {"length_scale", 0.25}};
    const json s = resolve_settings(c);
    CHECK(s.at("sigma0_sq").get<double>() == 2.0);
    CHECK(s.at("sigma0_sq").is_number_float());
    CHECK(s.at("length_scale").get<double>() == 0.25);
    CHECK(s.at("n").get<int>() == 100);

    c.overrides = json{{"sigmaO_sq", 2.0}};
    CHECK_THROWS_WITH_AS((void)resolve_settings(c), "unknown config key 'sigmaO_sq'", InputError);
    c.overrides = json{{"n", 2.5}};
    CHECK_THROWS_AS((void)resolve_settings(c), InputError);
    c.overrides = json{{"band", 1}};
    CHECK_THROWS_AS((void)resolve_settings(c), InputError);
    c.overrides = json::array();
    CHECK_THROWS_AS((void)resolve_settings(c), InputError);
}

TEST_CASE("trials flag maps to the experiment's count") {
    ExperimentConfig c;
    c.experiment = "control_mc";
    c.trials = 7;
    CHECK(resolve_settings(c).at("trials").get<int>() == 7);
    c.experiment = "theory_checks";
    CHECK(resolve_settings(c).at("instances").get<int>() == 7);
    c.experiment = "motivating";
    CHECK_THROWS_AS((void)resolve_settings(c), InputError);
    c.experiment = "control_mc";
    c.trials = 0;
    CHECK_THROWS_AS((void)resolve_settings(c), InputError);
    c.experiment = "nope";
    c.trials.reset();
    CHECK_THROWS_AS((void)resolve_settings(c), InputError);
}

TEST_CASE("interval means and thresholds") {
    const std::vector<double> x{0.0, 1.0, 2.0, 3.0};
    const std::vector<double> w{1.0, 2.0, 4.0, 8.0};
    CHECK(mean_over_interval(x, w, 1.0, 2.0) == 3.0);
    CHECK_THROWS_AS((void)mean_over_interval(x, w, 5.0, 6.0), InputError);
    CHECK(single_point_distrust_threshold(1.0) == doctest::Approx(2.0));
    CHECK(single_point_distrust_threshold(0.25) == doctest::Approx(2.5));
}

TEST_CASE("a single distrusted sample is shrunk harder") {
    const double s = 1.0;
    for (const double y : {2.2, -2.5, 3.0}) {
        REQUIRE(std::abs(y) > single_point_distrust_threshold(s));
        Dataset d{InputMatrix::Constant(1, 1, 4.0), Eigen::VectorXd::Constant(1, y)};
        IterConfig c;
        c.sigma0_sq = s;
        const HetGP het = fit_hetgp(d, c);
        const GPModel cl = fit_posterior_gp(d, c.kernel, s, Eigen::VectorXd::Zero(1));
        CHECK(std::abs(het.posterior.mean(d.X.col(0))) < std::abs(cl.mean(d.X.col(0))));
    }
}

TEST_CASE("motivating file contract and manifest") {
    ExperimentConfig c = make("motivating", "motivating");
    const ExperimentResult r = run_experiment(c);
    CHECK(r.files.size() == 3);
    for (const auto& f : r.files) {
        CHECK(std::filesystem::exists(c.output_dir / f));
    }
    const json m = read_json(c.output_dir / "manifest.json");
    CHECK(m.at("artifact") == kArtifactName);
    CHECK(m.at("version") == kArtifactVersion);
    CHECK(m.at("experiment") == "motivating");
    CHECK(m.at("seed").get<std::uint64_t>() == 1);
    CHECK(m.at("config").at("length_scale").get<double>() == 0.5);
    CHECK(m.at("files").size() == 3);
    for (const auto& f : m.at("files")) {
        CHECK(f.at("sha256").get<std::string>() ==
              sha256_file(c.output_dir / f.at("path").get<std::string>()));
    }
    CHECK(m.at("all_passed").get<bool>() == r.all_passed());
    CHECK(r.all_passed());
}

TEST_CASE("qualitative run writes four files per size") {
    ExperimentConfig c = make("qualitative_n", "qual");
    const ExperimentResult r = run_experiment(c);
    CHECK(r.files.size() == 16);
    const json m = read_json(c.output_dir / "manifest.json");
    CHECK(m.at("files").size() == 16);
    std::ifstream in(c.output_dir / "hetgp_N100.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "x,mean,std,lower_1s,upper_1s,lower_2s,upper_2s");
    c.overrides = json{{"ratio_size", 7}};
    CHECK_THROWS_AS((void)run_experiment(c), InputError);
}

TEST_CASE("band source flag changes only the band columns") {
    ExperimentConfig a = make("motivating", "band_a");
    ExperimentConfig b = make("motivating", "band_b");
    b.overrides = json{{"band", "gamma"}};
    const ExperimentResult ra = run_experiment(a);
    const ExperimentResult rb = run_experiment(b);
    CHECK(sha256_file(a.output_dir / "hetgp.csv") != sha256_file(b.output_dir / "hetgp.csv"));
    CHECK(sha256_file(a.output_dir / "dataset.csv") == sha256_file(b.output_dir / "dataset.csv"));
    // Ratio checks always use the total predictive variance.
    CHECK(ra.checks.front().detail.at("ratio") == rb.checks.front().detail.at("ratio"));
    b.overrides = json{{"band", "both"}};
    CHECK_THROWS_AS((void)run_experiment(b), InputError);
}

TEST_CASE("reruns are byte identical") {
    for (const std::string name : {"motivating", "qualitative_n", "theory_checks", "convergence_stats",
                                   "control_mc"}) {
        ExperimentConfig a = make(name, name + "_a");
        ExperimentConfig b = make(name, name + "_b");
        json small = json::object();
        if (name == "theory_checks") {
            small = {{"instances", 20}, {"equivalence_instances", 5}, {"contraction_cases", 20}};
        } else if (name == "convergence_stats") {
            small = {{"trials", 2}, {"sizes", {25, 100}}};
        } else if (name == "control_mc") {
            small = {{"trials", 2}, {"sim_duration", 1.0}, {"n_train", 30}};
        }
        a.overrides = small;
        b.overrides = small;
        (void)run_experiment(a);
        (void)run_experiment(b);
        CHECK_MESSAGE(sha256_file(a.output_dir / "manifest.json") ==
                          sha256_file(b.output_dir / "manifest.json"),
                      name);
        const json ma = read_json(a.output_dir / "manifest.json");
        for (const auto& f : ma.at("files")) {
            const auto p = f.at("path").get<std::string>();
            CHECK(sha256_file(a.output_dir / p) == sha256_file(b.output_dir / p));
        }
    }
}

TEST_CASE("different seeds change the artifacts") {
    ExperimentConfig a = make("motivating", "seed_a");
    ExperimentConfig b = make("motivating", "seed_b");
    b.seed = 2;
    (void)run_experiment(a);
    (void)run_experiment(b);
    CHECK(sha256_file(a.output_dir / "dataset.csv") != sha256_file(b.output_dir / "dataset.csv"));
}

TEST_CASE("theory checks report margins and the forced flag") {
    ExperimentConfig c = make("theory_checks", "theory");
    c.overrides = {{"instances", 50}, {"equivalence_instances", 10}, {"contraction_cases", 50}};
    const ExperimentResult r = run_experiment(c);
    CHECK(r.all_passed());
    const json doc = read_json(c.output_dir / "theory_checks.json");
    bool saw_margin = false;
    bool saw_flag = false;
    for (const auto& check : doc) {
        if (check.at("name") == "gamma_bounds") {
            saw_margin = check.at("detail").contains("tightest_margin");
        }
        if (check.at("name") == "sigma_condition_flag") {
            saw_flag = !check.at("detail").at("sigma_condition_ok").get<bool>();
        }
    }
    CHECK(saw_margin);
    CHECK(saw_flag);
}

TEST_CASE("control summary schema") {
    ExperimentConfig c = make("control_mc", "control");
    c.overrides = {{"trials", 2}, {"sim_duration", 1.0}, {"n_train", 30}};
    (void)run_experiment(c);
    const json s = read_json(c.output_dir / "control_summary.json");
    CHECK(s.at("scored_windows") == json::parse("[[0.0,1.0],[2.0,3.0]]"));
    REQUIRE(s.at("modes").size() == 3);
    for (const auto& m : s.at("modes")) {
        for (const char* key : {"mode", "cost_min", "cost_median", "cost_max", "violation_pct"}) {
            CHECK(m.contains(key));
        }
    }
}

TEST_CASE("unwritable output directory is reported with its path") {
    ExperimentConfig c;
    c.experiment = "motivating";
    c.output_dir = "/proc/hetgp_cannot_write_here";
    try {
        (void)run_experiment(c);
        FAIL("expected an error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("/proc/hetgp_cannot_write_here") != std::string::npos);
    }
}
