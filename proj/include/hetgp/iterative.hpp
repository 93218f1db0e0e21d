#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "hetgp/gp.hpp"
#include "hetgp/kernel.hpp"

namespace hetgp {

struct IterConfig {
    /// Stop once ||alpha_{j+1} - alpha_j||_2 <= delta.
    double delta = 1e-6;
    int max_iter = 200;
    double sigma0_sq = 1.0;
    KernelConfig kernel{};

    void validate() const;
};

/// Trace of the joint posterior/prior iteration. Entry j of every trace belongs to
/// iteration j + 1; the zero initialization is not stored.
struct FitReport {
    bool converged = false;
    int iterations = 0;
    Eigen::VectorXd gamma_final;
    Eigen::VectorXd lambda_final;
    std::vector<Eigen::VectorXd> alpha_trace;
    std::vector<Eigen::VectorXd> gamma_trace;
    std::vector<Eigen::VectorXd> lambda_trace;
    std::vector<double> stopping_metric_trace;
    std::size_t clamp_events = 0;
    /// sigma0^2 >= max_i y_i^2, the sufficient condition for guaranteed convergence.
    bool sigma_condition_ok = false;
    /// The stopping metric set no new minimum over kOscillationWindow iterations.
    bool oscillation_detected = false;
};

inline constexpr int kOscillationWindow = 20;

void to_json(nlohmann::json& j, const FitReport& report);

/// Heteroscedastic GP: posterior-GP for the function, prior-GP for the noise adjustment.
struct HetGP {
    GPModel posterior;
    GPModel prior;
    FitReport report;

    /// Mean lambda(x), total variance Lambda(x) using gamma(x) from the prior-GP, and
    /// the prior-GP variance Gamma(x) as the epistemic part.
    [[nodiscard]] Prediction predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    /// gamma(x), the prior-GP mean.
    [[nodiscard]] double gamma(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    /// sigma0^2 + gamma(x): the estimated noise variance of an observation at x.
    [[nodiscard]] double noise_level(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

/// Alternates posterior-GP and prior-GP updates from gamma_0 = 0 until the basis
/// weights settle. Running out of iterations is reported, not thrown.
[[nodiscard]] HetGP fit_hetgp(const Dataset& data, const IterConfig& config);

/// One independent fit per output column of Y (N x n_h).
[[nodiscard]] std::vector<HetGP> fit_hetgp_multi(const InputMatrix& X, const Eigen::MatrixXd& Y,
                                                 const IterConfig& config);

/// Closed form of one iteration when K(X,X) = I:
/// gamma+_i = (M_i^2 y_i^2 - s) / (1 + s), M_i = (s + gamma_i) / (1 + s + gamma_i).
[[nodiscard]] Eigen::VectorXd analytic_small_l_step(const Eigen::VectorXd& gamma,
                                                    const Eigen::VectorXd& Y, double sigma0_sq);

struct BoundsCheck {
    bool passed = true;
    std::size_t violations = 0;
    /// min over iterates and points of min(gamma - lower, upper - gamma).
    double worst_margin = 0.0;
    std::size_t worst_iteration = 0;
    Eigen::Index worst_index = 0;
};

/// Checks -s/(1+s) <= gamma_j <= (Y^2 - s)/(1+s) elementwise for every stored iterate.
/// `tolerance` absorbs floating-point rounding only.
[[nodiscard]] BoundsCheck check_gamma_bounds(const std::vector<Eigen::VectorXd>& gamma_trace,
                                             const Eigen::VectorXd& Y, double sigma0_sq,
                                             double tolerance = 0.0);

/// Scalar a_j with gamma_{j+1} - gamma* = a_j (gamma_j - gamma*) in the K = I regime.
[[nodiscard]] double contraction_factor(double gamma_j, double gamma_star, double y,
                                        double sigma0_sq);

}  // namespace hetgp
