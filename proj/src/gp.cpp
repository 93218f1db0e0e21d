#include "hetgp/gp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>

#include "hetgp/errors.hpp"

namespace hetgp {

void Dataset::validate() const {
    if (Y.size() == 0) {
        throw InputError("dataset has no samples");
    }
    if (X.cols() != Y.size()) {
        throw InputError("dataset has " + std::to_string(X.cols()) + " inputs but " +
                         std::to_string(Y.size()) + " outputs");
    }
    if (X.rows() == 0) {
        throw InputError("dataset inputs have zero dimension");
    }
    if (!X.allFinite() || !Y.allFinite()) {
        throw InputError("dataset contains non-finite values");
    }
}

Eigen::LLT<Eigen::MatrixXd> factorize_system(const Eigen::MatrixXd& system, double jitter) {
    Eigen::MatrixXd jittered = system;
    jittered.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(jittered);
    if (llt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jittered, Eigen::EigenvaluesOnly);
        const auto& ev = eig.eigenvalues();
        std::ostringstream msg;
        msg << "system matrix is not positive definite after jitter " << jitter
            << " (n=" << system.rows() << ", min eigenvalue " << ev.minCoeff()
            << ", max eigenvalue " << ev.maxCoeff() << ", min diagonal "
            << system.diagonal().minCoeff() << ")";
        throw NumericalError(msg.str());
    }
    return llt;
}

GPModel::GPModel(KernelConfig kernel, double sigma0_sq, InputMatrix X, Eigen::VectorXd targets,
                 Eigen::VectorXd gamma)
    : kernel_(kernel),
      sigma0_sq_(sigma0_sq),
      X_(std::move(X)),
      targets_(std::move(targets)),
      gamma_(std::move(gamma)) {
    kernel_.validate();
    if (!(sigma0_sq_ > 0.0) || !std::isfinite(sigma0_sq_)) {
        throw InputError("sigma0_sq must be positive and finite, got " + std::to_string(sigma0_sq_));
    }
    if (targets_.size() != X_.cols() || gamma_.size() != X_.cols()) {
        throw InputError("GP fit: expected " + std::to_string(X_.cols()) +
                         " targets and gamma entries, got " + std::to_string(targets_.size()) +
                         " and " + std::to_string(gamma_.size()));
    }
    if (!gamma_.allFinite()) {
        throw InputError("GP fit: gamma contains non-finite values");
    }
    for (Eigen::Index i = 0; i < gamma_.size(); ++i) {
        if (sigma0_sq_ + gamma_(i) < kVarianceFloor) {
            gamma_(i) = kVarianceFloor - sigma0_sq_;
            ++clamp_events_;
        }
    }
    gram_ = kernel_cross(kernel_, X_, X_);
    llt_ = factorize_system(system_matrix(), kernel_.jitter);
    alpha_ = solve(targets_);
}

Eigen::MatrixXd GPModel::system_matrix() const {
    Eigen::MatrixXd A = gram_;
    A.diagonal().array() += sigma0_sq_;
    A.diagonal() += gamma_;
    return A;
}

Eigen::VectorXd GPModel::solve(const Eigen::VectorXd& b) const {
    Eigen::VectorXd v = llt_.solve(b);
    if (kernel_.jitter > 0.0) {
        // Undo the jitter bias: r = b - A v with the exact matrix.
        Eigen::VectorXd r = b - gram_ * v;
        r.array() -= (sigma0_sq_ + gamma_.array()) * v.array();
        v += llt_.solve(r);
    }
    return v;
}

double GPModel::mean(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return kernel_vector(kernel_, x, X_).dot(alpha_);
}

Eigen::VectorXd GPModel::means(const InputMatrix& W) const {
    return kernel_cross(kernel_, W, X_) * alpha_;
}

double GPModel::variance(const Eigen::Ref<const Eigen::VectorXd>& x, double gamma_at_x) const {
    const Eigen::VectorXd k = kernel_vector(kernel_, x, X_);
    const Eigen::VectorXd half = llt_.matrixL().solve(k);
    return kernel_scalar(kernel_, x, x) + sigma0_sq_ + gamma_at_x - half.squaredNorm();
}

GPModel fit_posterior_gp(const Dataset& data, const KernelConfig& kernel, double sigma0_sq,
                         const Eigen::VectorXd& gamma) {
    data.validate();
    return GPModel(kernel, sigma0_sq, data.X, data.Y, gamma);
}

GPModel fit_prior_gp(const InputMatrix& X, const Eigen::VectorXd& Z, const KernelConfig& kernel,
                     double sigma0_sq) {
    Dataset{X, Z}.validate();
    return GPModel(kernel, sigma0_sq, X, Z, Eigen::VectorXd::Zero(Z.size()));
}

Prediction predict(const GPModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                   double gamma_at_x) {
    if (!std::isfinite(gamma_at_x) || !x.allFinite()) {
        throw InputError("predict: non-finite query");
    }
    const Eigen::VectorXd k = kernel_vector(model.kernel(), x, model.inputs());
    Prediction out;
    out.mean = k.dot(model.alpha());
    const double raw = model.variance(x, gamma_at_x);
    out.noise_variance = std::max(raw, kVarianceFloor);
    out.epistemic_variance = std::max(raw - model.sigma0_sq() - gamma_at_x, 0.0);
    return out;
}

Eigen::VectorXd second_moment_targets(const Dataset& data, const Eigen::VectorXd& lambda_at_train,
                                      double sigma0_sq) {
    if (lambda_at_train.size() != data.Y.size()) {
        throw InputError("second_moment_targets: expected " + std::to_string(data.Y.size()) +
                         " posterior means, got " + std::to_string(lambda_at_train.size()));
    }
    return (data.Y - lambda_at_train).array().square() - sigma0_sq;
}

}  // namespace hetgp
