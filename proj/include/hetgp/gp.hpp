#pragma once

#include <cstddef>

#include <Eigen/Dense>

#include "hetgp/kernel.hpp"

namespace hetgp {

/// Per-point noise variances (sigma0^2 + gamma) are clamped to this value before
/// factorization, and predictive variances are clamped to it on output.
inline constexpr double kVarianceFloor = 1e-8;

/// Training pairs: X is n_x x N (one column per sample), Y has length N.
struct Dataset {
    InputMatrix X;
    Eigen::VectorXd Y;

    [[nodiscard]] Eigen::Index size() const noexcept { return Y.size(); }
    [[nodiscard]] Eigen::Index input_dim() const noexcept { return X.rows(); }

    /// Throws InputError unless N >= 1, sizes agree and every entry is finite.
    void validate() const;
};

struct Prediction {
    double mean = 0.0;
    /// Total predictive variance of an observation at x (includes noise).
    double noise_variance = 0.0;
    /// Uncertainty of the mean alone.
    double epistemic_variance = 0.0;
};

/// A fitted Gaussian-process conditional with system matrix K + sigma0^2 I + diag(gamma).
///
/// Immutable after construction; all queries are const and thread-safe.
class GPModel {
public:
    GPModel(KernelConfig kernel, double sigma0_sq, InputMatrix X, Eigen::VectorXd targets,
            Eigen::VectorXd gamma);

    [[nodiscard]] const KernelConfig& kernel() const noexcept { return kernel_; }
    [[nodiscard]] double sigma0_sq() const noexcept { return sigma0_sq_; }
    [[nodiscard]] const InputMatrix& inputs() const noexcept { return X_; }
    [[nodiscard]] const Eigen::VectorXd& targets() const noexcept { return targets_; }
    /// Per-point prior adjustment after clamping, so sigma0^2 + gamma >= kVarianceFloor.
    [[nodiscard]] const Eigen::VectorXd& gamma_train() const noexcept { return gamma_; }
    [[nodiscard]] const Eigen::VectorXd& alpha() const noexcept { return alpha_; }
    [[nodiscard]] std::size_t clamp_events() const noexcept { return clamp_events_; }

    /// k(x, X) alpha.
    [[nodiscard]] double mean(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    /// Means at every column of W.
    [[nodiscard]] Eigen::VectorXd means(const InputMatrix& W) const;

    /// Unclamped k(x,x) + sigma0^2 + gamma_at_x - k(x,X) A^{-1} k(X,x).
    [[nodiscard]] double variance(const Eigen::Ref<const Eigen::VectorXd>& x,
                                  double gamma_at_x) const;

    /// Solves A v = b with the cached factorization (one refinement step against
    /// the unjittered matrix).
    [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

    /// The unjittered system matrix K + sigma0^2 I + diag(gamma).
    [[nodiscard]] Eigen::MatrixXd system_matrix() const;

private:
    KernelConfig kernel_;
    double sigma0_sq_;
    InputMatrix X_;
    Eigen::VectorXd targets_;
    Eigen::VectorXd gamma_;
    Eigen::MatrixXd gram_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd alpha_;
    std::size_t clamp_events_ = 0;
};

/// Posterior-GP: mean k(x,X)(K + s I + diag(gamma))^{-1} Y. With gamma == 0 this is
/// the classical constant-noise GP.
[[nodiscard]] GPModel fit_posterior_gp(const Dataset& data, const KernelConfig& kernel,
                                       double sigma0_sq, const Eigen::VectorXd& gamma);

/// Prior-GP fit on second-moment targets Z. The system matrix has no diag(gamma) term.
[[nodiscard]] GPModel fit_prior_gp(const InputMatrix& X, const Eigen::VectorXd& Z,
                                   const KernelConfig& kernel, double sigma0_sq);

/// Mean, clamped total variance and epistemic part at x. `gamma_at_x` is the
/// prior-GP mean at x, or 0 for the classical baseline.
[[nodiscard]] Prediction predict(const GPModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                                 double gamma_at_x);

/// z_i = (y_i - lambda_i)^2 - sigma0^2. Negative values are kept.
[[nodiscard]] Eigen::VectorXd second_moment_targets(const Dataset& data,
                                                    const Eigen::VectorXd& lambda_at_train,
                                                    double sigma0_sq);

/// Cholesky of a symmetric system matrix plus `jitter` on the diagonal. Throws
/// NumericalError with conditioning diagnostics when it fails.
[[nodiscard]] Eigen::LLT<Eigen::MatrixXd> factorize_system(const Eigen::MatrixXd& system,
                                                           double jitter);

}  // namespace hetgp
