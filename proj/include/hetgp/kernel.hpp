#pragma once

#include <Eigen/Dense>

namespace hetgp {

/// Inputs are stored column-wise: one column per sample, one row per input dimension.
using InputMatrix = Eigen::MatrixXd;

/// Squared-exponential kernel k(x, w) = exp(-l * |x - w|^2).
///
/// Note that `length_scale` multiplies the squared distance, so a *large* value
/// makes the kernel narrow and drives the Gram matrix of distinct points to I.
struct KernelConfig {
    double length_scale = 0.5;
    /// Added to system-matrix diagonals inside factorizations only.
    double jitter = 1e-10;

    void validate() const;
};

[[nodiscard]] double kernel_scalar(const KernelConfig& config,
                                   const Eigen::Ref<const Eigen::VectorXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXd>& w);

/// Cross-covariance matrix with entry (i, j) = k(X.col(i), W.col(j)).
[[nodiscard]] Eigen::MatrixXd kernel_cross(const KernelConfig& config, const InputMatrix& X,
                                           const InputMatrix& W);

/// Row vector k(x, X) returned as a column vector of length X.cols().
[[nodiscard]] Eigen::VectorXd kernel_vector(const KernelConfig& config,
                                            const Eigen::Ref<const Eigen::VectorXd>& x,
                                            const InputMatrix& X);

}  // namespace hetgp
