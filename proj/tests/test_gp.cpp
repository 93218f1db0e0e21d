#include "doctest.h"

#include <cmath>

#include "hetgp/errors.hpp"
#include "hetgp/gp.hpp"
#include "hetgp/rng.hpp"

using namespace hetgp;

namespace {

Dataset random_dataset(Rng& rng, int n, int dim) {
    Dataset d{InputMatrix(dim, n), Eigen::VectorXd(n)};
    for (int i = 0; i < n; ++i) {
        for (int r = 0; r < dim; ++r) {
            d.X(r, i) = rng.uniform(-2.0, 2.0);
        }
        d.Y(i) = rng.uniform(-1.0, 1.0);
    }
    return d;
}

// Textbook formulas with an explicit inverse.
struct DenseOracle {
    Eigen::MatrixXd Ainv;
    Eigen::VectorXd alpha;
};

DenseOracle dense_oracle(const Dataset& d, const KernelConfig& k, double s,
                         const Eigen::VectorXd& gamma) {
    const Eigen::Index n = d.size();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double r2 = (d.X.col(i) - d.X.col(j)).squaredNorm();
            A(i, j) = std::exp(-k.length_scale * r2);
        }
        A(i, i) += s + gamma(i);
    }
    DenseOracle o;
    o.Ainv = A.inverse();
    o.alpha = o.Ainv * d.Y;
    return o;
}

}  // namespace

TEST_CASE("posterior GP matches dense inverse on random instances") {
    Rng rng(42);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 30);
        const int dim = 1 + static_cast<int>(rng() % 3);
        const Dataset d = random_dataset(rng, n, dim);
        const KernelConfig k{rng.uniform(0.2, 3.0), 1e-10};
        const double s = rng.uniform(0.05, 2.0);
        Eigen::VectorXd gamma(n);
        for (int i = 0; i < n; ++i) {
            gamma(i) = rng.uniform(-0.5 * s, s);
        }
        const GPModel m = fit_posterior_gp(d, k, s, gamma);
        const DenseOracle o = dense_oracle(d, k, s, gamma);
        CHECK((m.alpha() - o.alpha).norm() <= 1e-9 * o.alpha.norm());

        Eigen::VectorXd x(dim);
        for (int r = 0; r < dim; ++r) {
            x(r) = rng.uniform(-2.5, 2.5);
        }
        const double gx = rng.uniform(0.0, 0.3);
        Eigen::VectorXd kx(n);
        for (int i = 0; i < n; ++i) {
            kx(i) = std::exp(-k.length_scale * (x - d.X.col(i)).squaredNorm());
        }
        const double mean = kx.dot(o.alpha);
        const double var = 1.0 + s + gx - kx.dot(o.Ainv * kx);
        const Prediction p = predict(m, x, gx);
        CHECK(std::abs(p.mean - mean) <= 1e-9 * std::max(1.0, std::abs(mean)));
        CHECK(std::abs(p.noise_variance - var) <= 1e-9 * var);
        CHECK(std::abs(p.epistemic_variance - (var - s - gx)) <= 1e-9);
    }
}

TEST_CASE("far from data the prior is recovered") {
    Dataset d{InputMatrix(1, 3), Eigen::Vector3d(0.3, -0.1, 0.8)};
    d.X << 0.0, 0.5, 1.0;
    const GPModel m = fit_posterior_gp(d, {0.5, 1e-10}, 0.4, Eigen::VectorXd::Zero(3));
    const Prediction p = predict(m, Eigen::VectorXd::Constant(1, 100.0), 0.25);
    CHECK(std::abs(p.mean) < 1e-10);
    CHECK(std::abs(p.noise_variance - (1.0 + 0.4 + 0.25)) < 1e-10);
}

TEST_CASE("posterior mean shrinks as sigma0 grows") {
    Rng rng(7);
    const Dataset d = random_dataset(rng, 12, 1);
    double prev = 1e300;
    for (const double s : {1.0, 10.0, 100.0, 1000.0}) {
        const GPModel m = fit_posterior_gp(d, {0.5, 1e-10}, s, Eigen::VectorXd::Zero(12));
        const double norm = m.means(d.X).cwiseAbs().maxCoeff();
        CHECK(norm < prev);
        prev = norm;
    }
    CHECK(prev < 1e-2);
}

TEST_CASE("prior GP has no gamma term") {
    Dataset d{InputMatrix(1, 2), Eigen::Vector2d(0.0, 0.0)};
    d.X << 0.0, 1.0;
    const Eigen::Vector2d z(-0.5, 0.2);
    const GPModel prior = fit_prior_gp(d.X, z, {0.5, 1e-10}, 0.3);
    CHECK(prior.gamma_train().cwiseAbs().maxCoeff() == 0.0);
    const Eigen::MatrixXd A = prior.system_matrix();
    CHECK(std::abs(A(0, 0) - 1.3) < 1e-15);
    CHECK(std::abs(A(0, 1) - std::exp(-0.5)) < 1e-15);
}

TEST_CASE("second moment targets") {
    Dataset d{InputMatrix::Zero(1, 3), Eigen::Vector3d(1.0, -0.5, 0.0)};
    const Eigen::Vector3d lambda(0.5, 0.5, 0.0);
    const Eigen::VectorXd z = second_moment_targets(d, lambda, 1.0);
    CHECK(z(0) == doctest::Approx(-0.75));
    CHECK(z(1) == doctest::Approx(0.0));
    CHECK(z(2) == doctest::Approx(-1.0));
    CHECK_THROWS_AS((void)second_moment_targets(d, Eigen::Vector2d(0, 0), 1.0), InputError);
}

TEST_CASE("variance floor clamps very negative gamma") {
    Dataset d{InputMatrix(1, 2), Eigen::Vector2d(0.1, 0.2)};
    d.X << 0.0, 5.0;
    const GPModel m = fit_posterior_gp(d, {0.5, 1e-10}, 0.5, Eigen::Vector2d(-2.0, 0.0));
    CHECK(m.clamp_events() == 1);
    CHECK(m.gamma_train()(0) + 0.5 == doctest::Approx(kVarianceFloor));
    // Clamp at output as well.
    const Prediction p = predict(m, d.X.col(0), -10.0);
    CHECK(p.noise_variance == kVarianceFloor);
}

TEST_CASE("dataset validation") {
    Dataset empty{InputMatrix(1, 0), Eigen::VectorXd(0)};
    CHECK_THROWS_AS(empty.validate(), InputError);
    Dataset mismatch{InputMatrix::Zero(1, 3), Eigen::VectorXd::Zero(2)};
    CHECK_THROWS_AS(mismatch.validate(), InputError);
    Dataset nan_data{InputMatrix::Zero(1, 2), Eigen::Vector2d(0.0, std::nan(""))};
    CHECK_THROWS_AS(nan_data.validate(), InputError);
    CHECK_THROWS_AS((void)fit_posterior_gp(mismatch, {0.5, 1e-10}, 1.0, Eigen::VectorXd::Zero(3)),
                    InputError);
    Dataset ok{InputMatrix::Zero(1, 2), Eigen::Vector2d(0.0, 1.0)};
    CHECK_THROWS_AS((void)fit_posterior_gp(ok, {0.5, 1e-10}, 0.0, Eigen::VectorXd::Zero(2)),
                    InputError);
    CHECK_THROWS_AS((void)fit_posterior_gp(ok, {0.5, 1e-10}, 1.0, Eigen::VectorXd::Zero(3)),
                    InputError);
}

TEST_CASE("factorization failure reports diagnostics") {
    Eigen::Matrix2d bad;
    bad << 1.0, 2.0, 2.0, 1.0;
    try {
        (void)factorize_system(bad, 0.0);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("eigenvalue") != std::string::npos);
    }
}

TEST_CASE("duplicate inputs stay factorizable with noise") {
    Dataset d{InputMatrix::Zero(1, 4), Eigen::Vector4d(0.1, 0.2, 0.3, 0.4)};
    const GPModel m = fit_posterior_gp(d, {0.5, 1e-10}, 1e-3, Eigen::VectorXd::Zero(4));
    CHECK(std::abs(m.mean(d.X.col(0)) - 0.25 * 4.0 / (4.0 + 1e-3)) < 1e-9);
}
