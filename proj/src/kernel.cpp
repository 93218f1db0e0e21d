#include "hetgp/kernel.hpp"

#include <cmath>
#include <string>

#include "hetgp/errors.hpp"

namespace hetgp {

void KernelConfig::validate() const {
    if (!(length_scale > 0.0) || !std::isfinite(length_scale)) {
        throw InputError("kernel length_scale must be positive and finite, got " +
                         std::to_string(length_scale));
    }
    if (!(jitter >= 0.0) || jitter > 1e-6) {
        throw InputError("kernel jitter must lie in [0, 1e-6], got " + std::to_string(jitter));
    }
}

double kernel_scalar(const KernelConfig& config, const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& w) {
    if (x.size() != w.size()) {
        throw InputError("kernel_scalar: dimension mismatch (" + std::to_string(x.size()) +
                         " vs " + std::to_string(w.size()) + ")");
    }
    return std::exp(-config.length_scale * (x - w).squaredNorm());
}

Eigen::MatrixXd kernel_cross(const KernelConfig& config, const InputMatrix& X,
                             const InputMatrix& W) {
    if (X.cols() == 0 || W.cols() == 0) {
        throw InputError("kernel_cross: empty input collection");
    }
    if (X.rows() != W.rows()) {
        throw InputError("kernel_cross: input dimension mismatch (" + std::to_string(X.rows()) +
                         " vs " + std::to_string(W.rows()) + ")");
    }
    Eigen::MatrixXd K(X.cols(), W.cols());
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
        for (Eigen::Index i = 0; i < X.cols(); ++i) {
            K(i, j) = std::exp(-config.length_scale * (X.col(i) - W.col(j)).squaredNorm());
        }
    }
    return K;
}

Eigen::VectorXd kernel_vector(const KernelConfig& config,
                              const Eigen::Ref<const Eigen::VectorXd>& x, const InputMatrix& X) {
    if (x.size() != X.rows()) {
        throw InputError("kernel_vector: query has dimension " + std::to_string(x.size()) +
                         ", training inputs have " + std::to_string(X.rows()));
    }
    Eigen::VectorXd k(X.cols());
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
        k(i) = std::exp(-config.length_scale * (X.col(i) - x).squaredNorm());
    }
    return k;
}

}  // namespace hetgp
