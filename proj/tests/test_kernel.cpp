#include "doctest.h"

#include <cmath>

#include "hetgp/errors.hpp"
#include "hetgp/kernel.hpp"

using namespace hetgp;

TEST_CASE("kernel value at zero distance is one") {
    const KernelConfig k{0.5, 1e-10};
    const Eigen::Vector2d x(0.3, -1.2);
    CHECK(kernel_scalar(k, x, x) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("kernel matches exp(-l d^2) by hand") {
    const KernelConfig k{0.5, 0.0};
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.0);
    const Eigen::VectorXd w = Eigen::VectorXd::Constant(1, 2.0);
    CHECK(std::abs(kernel_scalar(k, x, w) - std::exp(-2.0)) < 1e-15);

    const Eigen::Vector2d a(1.0, 2.0);
    const Eigen::Vector2d b(2.0, 4.0);
    const KernelConfig k2{0.1, 0.0};
    CHECK(std::abs(kernel_scalar(k2, a, b) - std::exp(-0.5)) < 1e-15);
}

TEST_CASE("gram matrix is symmetric with unit diagonal") {
    const KernelConfig k{0.7, 1e-10};
    InputMatrix X(2, 5);
    X << 0.1, 0.4, -0.3, 2.0, 1.1,
         0.5, -0.2, 0.9, 0.0, 1.3;
    const Eigen::MatrixXd K = kernel_cross(k, X, X);
    CHECK((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((K.diagonal().array() - 1.0).abs().maxCoeff() < 1e-15);
    const Eigen::LLT<Eigen::MatrixXd> llt(K + 1e-10 * Eigen::MatrixXd::Identity(5, 5));
    CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("large length scale gives the identity") {
    const KernelConfig k{1e6, 1e-10};
    InputMatrix X(1, 3);
    X << 0.0, 0.5, 1.7;
    const Eigen::MatrixXd K = kernel_cross(k, X, X);
    CHECK((K - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross covariance and vector agree") {
    const KernelConfig k{0.5, 1e-10};
    InputMatrix X(1, 4);
    X << 0.0, 1.0, 2.0, 3.5;
    InputMatrix W(1, 2);
    W << 0.5, 2.5;
    const Eigen::MatrixXd C = kernel_cross(k, X, W);
    CHECK(C.rows() == 4);
    CHECK(C.cols() == 2);
    for (int j = 0; j < 2; ++j) {
        const Eigen::VectorXd v = kernel_vector(k, W.col(j), X);
        CHECK((v - C.col(j)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("kernel input validation") {
    InputMatrix X(2, 3);
    X.setZero();
    InputMatrix W(1, 3);
    W.setZero();
    const KernelConfig k{0.5, 1e-10};
    CHECK_THROWS_AS((void)kernel_cross(k, X, W), InputError);
    CHECK_THROWS_AS((void)kernel_cross(k, InputMatrix(1, 0), W), InputError);
    CHECK_THROWS_AS((void)kernel_scalar(k, Eigen::Vector2d(0, 0), Eigen::VectorXd::Zero(1)), InputError);

    CHECK_THROWS_AS(KernelConfig({0.0, 1e-10}).validate(), InputError);
    CHECK_THROWS_AS(KernelConfig({-1.0, 1e-10}).validate(), InputError);
    CHECK_THROWS_AS(KernelConfig({std::nan(""), 1e-10}).validate(), InputError);
    CHECK_THROWS_AS(KernelConfig({0.5, 1e-5}).validate(), InputError);
    CHECK_THROWS_AS(KernelConfig({0.5, -1e-12}).validate(), InputError);
    CHECK_NOTHROW(KernelConfig({0.5, 1e-6}).validate());
}
