#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hetgp/datagen.hpp"
#include "hetgp/errors.hpp"
#include "hetgp/io.hpp"
#include "hetgp/rng.hpp"

using namespace hetgp;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("hetgp_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

}  // namespace

TEST_CASE("splitmix64 reference values") {
    // First outputs for state 1234567 from the reference implementation.
    std::uint64_t state = 1234567;
    CHECK(splitmix64(state) == 6457827717110365317ULL);
    CHECK(splitmix64(state) == 3203168211198807973ULL);
    CHECK(splitmix64(state) == 9817491932198370423ULL);
}

TEST_CASE("xoshiro256** stream is pinned") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a() == b());
    }
    Rng c(43);
    Rng d(42);
    CHECK(c() != d());
}

TEST_CASE("derive_seed separates streams") {
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}

TEST_CASE("uniform and normal moments") {
    Rng rng(2024);
    const int n = 200000;
    double su = 0.0;
    double sn = 0.0;
    double sn2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        CHECK_UNARY(u >= 0.0);
        CHECK_UNARY(u < 1.0);
        su += u;
        const double z = rng.normal();
        sn += z;
        sn2 += z * z;
    }
    CHECK(std::abs(su / n - 0.5) < 0.005);
    CHECK(std::abs(sn / n) < 0.01);
    CHECK(std::abs(sn2 / n - 1.0) < 0.02);
}

TEST_CASE("illustrative samples follow the ground truth within 3%") {
    const Dataset d = sample_illustrative(200000, 17);
    const GroundTruth t = illustrative_truth();
    double mean_res = 0.0;
    double mean_ratio = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        const double x = d.X(0, i);
        CHECK_UNARY(x >= 0.0);
        CHECK_UNARY(x < 10.0);
        const double r = d.Y(i) - t.mean_fn(x);
        mean_res += r;
        mean_ratio += r * r / t.var_fn(x);
    }
    mean_res /= static_cast<double>(d.size());
    mean_ratio /= static_cast<double>(d.size());
    CHECK(std::abs(mean_res) < 0.03);
    CHECK(std::abs(mean_ratio - 1.0) < 0.03);
}

TEST_CASE("friction samples follow the ground truth within 3%") {
    const Dataset d = sample_friction(200000, 3);
    const GroundTruth t = friction_truth();
    double ratio = 0.0;
    double res = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        const double v = d.X(0, i);
        CHECK_UNARY(v >= -1.0);
        CHECK_UNARY(v < 1.0);
        const double r = d.Y(i) - t.mean_fn(v);
        res += r;
        ratio += r * r / t.var_fn(v);
    }
    CHECK(std::abs(res / static_cast<double>(d.size())) < 0.03);
    CHECK(std::abs(ratio / static_cast<double>(d.size()) - 1.0) < 0.03);
    CHECK(t.mean_fn(0.5) == doctest::Approx(0.5 + std::sin(1.5)));
    CHECK(t.var_fn(-0.5) == doctest::Approx(0.2));
    CHECK(t.var_fn(1.0) == doctest::Approx(1.0));
}

TEST_CASE("motivating set has two clusters") {
    const Dataset d = sample_motivating(101, 8);
    int low = 0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        const double x = d.X(0, i);
        const bool in_low = x >= 1.0 && x <= 2.5;
        const bool in_high = x >= 7.5 && x <= 9.0;
        CHECK_UNARY(in_low || in_high);
        low += in_low ? 1 : 0;
    }
    CHECK(low == 51);
}

TEST_CASE("seeded sampling is reproducible") {
    const Dataset a = sample_illustrative(50, 99);
    const Dataset b = sample_illustrative(50, 99);
    const Dataset c = sample_illustrative(50, 100);
    CHECK((a.X.array() == b.X.array()).all());
    CHECK((a.Y.array() == b.Y.array()).all());
    CHECK_FALSE((a.Y.array() == c.Y.array()).all());
    CHECK_THROWS_AS((void)sample_illustrative(0, 1), InputError);
}

TEST_CASE("residual extraction recovers the simulated friction") {
    const double Ts = 0.05;
    const ResidualSpec spec = double_integrator_spec(Ts);
    Rng rng(12);
    const GroundTruth t = friction_truth();
    for (int i = 0; i < 50; ++i) {
        const double p = rng.uniform(-1.0, 1.0);
        const double v = rng.uniform(-1.0, 1.0);
        const double u = rng.uniform(-3.0, 3.0);
        const double F = t.mean_fn(v) + std::sqrt(t.var_fn(v)) * rng.normal();
        const Eigen::Vector2d x(p, v);
        const Eigen::Vector2d next(p + Ts * v, v + Ts * (u - F));
        const Eigen::VectorXd y = extract_residual(spec, x, Eigen::VectorXd::Constant(1, u), next);
        REQUIRE(y.size() == 1);
        CHECK(std::abs(y(0) + F) < 1e-10);
    }
    const ResidualSpec::Nominal f = [](const Eigen::VectorXd& xk, const Eigen::VectorXd&) { return xk; };
    CHECK_THROWS_AS(ResidualSpec(Eigen::MatrixXd::Zero(2, 1), f), InputError);
}

TEST_CASE("dataset CSV round trip is bit exact") {
    const auto dir = temp_dir("csv");
    Dataset d = sample_illustrative(30, 5);
    d.Y(0) = 1e-300;
    d.Y(1) = -0.1;
    d.Y(2) = 123456789.123456789;
    write_dataset_csv(dir / "d.csv", d);
    const Dataset back = read_dataset_csv(dir / "d.csv");
    CHECK((back.X.array() == d.X.array()).all());
    CHECK((back.Y.array() == d.Y.array()).all());

    Dataset two{InputMatrix(2, 2), Eigen::Vector2d(1.0, 2.0)};
    two.X << 0.1, 0.2, 0.3, 0.4;
    write_dataset_csv(dir / "two.csv", two);
    std::ifstream in(dir / "two.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "x_1,x_2,y");
    const Dataset back2 = read_dataset_csv(dir / "two.csv");
    CHECK((back2.X.array() == two.X.array()).all());
}

TEST_CASE("dataset CSV errors") {
    const auto dir = temp_dir("csv_err");
    write_file(dir / "empty.csv", "");
    CHECK_THROWS_AS((void)read_dataset_csv(dir / "empty.csv"), ParseError);
    write_file(dir / "header.csv", "x_1,y\n");
    CHECK_THROWS_AS((void)read_dataset_csv(dir / "header.csv"), ParseError);
    write_file(dir / "bad.csv", "x_1,y\n0.5,1.0\n0.7,abc\n");
    try {
        (void)read_dataset_csv(dir / "bad.csv");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    write_file(dir / "short.csv", "x_1,y\n0.5\n");
    CHECK_THROWS_AS((void)read_dataset_csv(dir / "short.csv"), ParseError);
    CHECK_THROWS((void)read_dataset_csv(dir / "missing.csv"));
}

TEST_CASE("number formatting round trips") {
    for (const double v : {0.0, -0.0, 1.0 / 3.0, 1e-308, 5e-324, 1.7976931348623157e308, -2.5}) {
        double back = 1.0;
        REQUIRE(parse_double(format_double(v), back));
        CHECK(back == v);
    }
    double out = 0.0;
    CHECK_FALSE(parse_double("1.5x", out));
    CHECK_FALSE(parse_double("", out));
    const auto fields = split_csv_line("a,b,,c");
    REQUIRE(fields.size() == 4);
    CHECK(fields[2].empty());
}

TEST_CASE("sha256 of a known file") {
    const auto dir = temp_dir("sha");
    write_file(dir / "abc.txt", "abc");
    CHECK(sha256_file(dir / "abc.txt") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
