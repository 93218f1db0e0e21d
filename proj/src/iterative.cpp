#include "hetgp/iterative.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "hetgp/errors.hpp"

namespace hetgp {

void IterConfig::validate() const {
    kernel.validate();
    if (!(delta > 0.0)) {
        throw InputError("iteration delta must be positive");
    }
    if (max_iter < 1) {
        throw InputError("iteration max_iter must be at least 1");
    }
    if (!(sigma0_sq > 0.0) || !std::isfinite(sigma0_sq)) {
        throw InputError("sigma0_sq must be positive and finite");
    }
}

namespace {

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

nlohmann::json trace_to_json(const std::vector<Eigen::VectorXd>& trace) {
    auto out = nlohmann::json::array();
    for (const auto& v : trace) {
        out.push_back(vector_to_json(v));
    }
    return out;
}

// Solves (K + diag(noise)) x = b with a jittered Cholesky and one refinement step.
class NoiseSystem {
public:
    NoiseSystem(const Eigen::MatrixXd& gram, Eigen::VectorXd noise, double jitter)
        : gram_(gram), noise_(std::move(noise)) {
        Eigen::MatrixXd A = gram;
        A.diagonal() += noise_;
        llt_ = factorize_system(A, jitter);
        refine_ = jitter > 0.0;
    }

    [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
        Eigen::VectorXd x = llt_.solve(b);
        if (refine_) {
            Eigen::VectorXd r = b - gram_ * x - noise_.cwiseProduct(x);
            x += llt_.solve(r);
        }
        return x;
    }

private:
    const Eigen::MatrixXd& gram_;
    Eigen::VectorXd noise_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    bool refine_ = false;
};

// sigma0^2 + gamma clamped to the variance floor, counting clamped entries.
Eigen::VectorXd clamped_noise(const Eigen::VectorXd& gamma, double sigma0_sq,
                              std::size_t& clamp_events) {
    Eigen::VectorXd noise = gamma.array() + sigma0_sq;
    for (Eigen::Index i = 0; i < noise.size(); ++i) {
        if (noise(i) < kVarianceFloor) {
            noise(i) = kVarianceFloor;
            ++clamp_events;
        }
    }
    return noise;
}

}  // namespace

void to_json(nlohmann::json& j, const FitReport& report) {
    j = nlohmann::json{
        {"converged", report.converged},
        {"iterations", report.iterations},
        {"gamma_final", vector_to_json(report.gamma_final)},
        {"lambda_final", vector_to_json(report.lambda_final)},
        {"alpha_trace", trace_to_json(report.alpha_trace)},
        {"gamma_trace", trace_to_json(report.gamma_trace)},
        {"lambda_trace", trace_to_json(report.lambda_trace)},
        {"stopping_metric_trace", report.stopping_metric_trace},
        {"clamp_events", report.clamp_events},
        {"sigma_condition_ok", report.sigma_condition_ok},
        {"oscillation_detected", report.oscillation_detected},
    };
}

Prediction HetGP::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const Prediction noise_part = hetgp::predict(prior, x, 0.0);
    Prediction out = hetgp::predict(posterior, x, noise_part.mean);
    out.epistemic_variance = noise_part.noise_variance;
    return out;
}

double HetGP::gamma(const Eigen::Ref<const Eigen::VectorXd>& x) const { return prior.mean(x); }

double HetGP::noise_level(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return posterior.sigma0_sq() + prior.mean(x);
}

HetGP fit_hetgp(const Dataset& data, const IterConfig& config) {
    data.validate();
    config.validate();

    const double s = config.sigma0_sq;
    const double jitter = config.kernel.jitter;
    const Eigen::Index n = data.size();
    const Eigen::MatrixXd K = kernel_cross(config.kernel, data.X, data.X);

    FitReport report;
    report.sigma_condition_ok = s >= data.Y.array().square().maxCoeff();

    // The prior-GP system matrix K + s I does not change between iterations.
    const NoiseSystem prior_system(K, Eigen::VectorXd::Constant(n, s), jitter);

    Eigen::VectorXd gamma = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd Z = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(n);
    // Weights for gamma_j. alpha_0 is initialized to zero rather than solved for,
    // so the first posterior update needs its own solve.
    Eigen::VectorXd weights;

    double best_metric = std::numeric_limits<double>::infinity();
    int best_iteration = 0;

    for (int j = 0; j < config.max_iter; ++j) {
        try {
            if (j == 0) {
                const NoiseSystem posterior(K, clamped_noise(gamma, s, report.clamp_events),
                                            jitter);
                weights = posterior.solve(data.Y);
            }
            lambda = K * weights;
            Z = (data.Y - lambda).array().square() - s;
            gamma = K * prior_system.solve(Z);

            const NoiseSystem posterior(K, clamped_noise(gamma, s, report.clamp_events), jitter);
            Eigen::VectorXd next_alpha = posterior.solve(data.Y);
            const double metric = (next_alpha - alpha).norm();
            alpha = std::move(next_alpha);
            weights = alpha;

            report.alpha_trace.push_back(alpha);
            report.gamma_trace.push_back(gamma);
            report.lambda_trace.push_back(lambda);
            report.stopping_metric_trace.push_back(metric);
            report.iterations = j + 1;

            if (!std::isfinite(metric)) {
                throw NumericalError("non-finite stopping metric");
            }
            if (metric < best_metric) {
                best_metric = metric;
                best_iteration = j;
            } else if (j - best_iteration >= kOscillationWindow) {
                report.oscillation_detected = true;
            }
            if (metric <= config.delta) {
                report.converged = true;
                break;
            }
        } catch (const NumericalError& e) {
            throw NumericalError("fit_hetgp iteration " + std::to_string(j + 1) + ": " + e.what());
        }
    }

    report.gamma_final = gamma;
    report.lambda_final = lambda;

    GPModel posterior = fit_posterior_gp(data, config.kernel, s, gamma);
    GPModel prior = fit_prior_gp(data.X, Z, config.kernel, s);
    report.clamp_events += posterior.clamp_events();
    return HetGP{std::move(posterior), std::move(prior), std::move(report)};
}

std::vector<HetGP> fit_hetgp_multi(const InputMatrix& X, const Eigen::MatrixXd& Y,
                                   const IterConfig& config) {
    if (Y.rows() != X.cols()) {
        throw InputError("fit_hetgp_multi: Y must have one row per input column");
    }
    std::vector<HetGP> out;
    out.reserve(static_cast<std::size_t>(Y.cols()));
    for (Eigen::Index d = 0; d < Y.cols(); ++d) {
        out.push_back(fit_hetgp(Dataset{X, Y.col(d)}, config));
    }
    return out;
}

Eigen::VectorXd analytic_small_l_step(const Eigen::VectorXd& gamma, const Eigen::VectorXd& Y,
                                      double sigma0_sq) {
    if (gamma.size() != Y.size()) {
        throw InputError("analytic_small_l_step: gamma and Y lengths differ");
    }
    Eigen::VectorXd out(gamma.size());
    for (Eigen::Index i = 0; i < gamma.size(); ++i) {
        const double denom = 1.0 + sigma0_sq + gamma(i);
        if (!(denom > 0.0)) {
            throw NumericalError("analytic_small_l_step: 1 + sigma0^2 + gamma is not positive at " +
                                 std::to_string(i));
        }
        const double m = (sigma0_sq + gamma(i)) / denom;
        out(i) = (m * m * Y(i) * Y(i) - sigma0_sq) / (1.0 + sigma0_sq);
    }
    return out;
}

BoundsCheck check_gamma_bounds(const std::vector<Eigen::VectorXd>& gamma_trace,
                               const Eigen::VectorXd& Y, double sigma0_sq, double tolerance) {
    BoundsCheck out;
    out.worst_margin = std::numeric_limits<double>::infinity();
    const double lower = -sigma0_sq / (1.0 + sigma0_sq);
    const Eigen::VectorXd upper = (Y.array().square() - sigma0_sq) / (1.0 + sigma0_sq);
    for (std::size_t j = 0; j < gamma_trace.size(); ++j) {
        const Eigen::VectorXd& g = gamma_trace[j];
        if (g.size() != Y.size()) {
            throw InputError("check_gamma_bounds: iterate " + std::to_string(j) +
                             " has the wrong length");
        }
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            const double margin = std::min(g(i) - lower, upper(i) - g(i));
            if (margin < out.worst_margin) {
                out.worst_margin = margin;
                out.worst_iteration = j;
                out.worst_index = i;
            }
            if (margin < -tolerance) {
                ++out.violations;
            }
        }
    }
    out.passed = out.violations == 0;
    return out;
}

double contraction_factor(double gamma_j, double gamma_star, double y, double sigma0_sq) {
    const double s = sigma0_sq;
    const double numer =
        gamma_j + gamma_star + 2.0 * (s + s * gamma_j + s * gamma_star + gamma_j * gamma_star + s * s);
    const double dj = 1.0 + s + gamma_j;
    const double ds = 1.0 + s + gamma_star;
    return (y * y / (1.0 + s)) * numer / (dj * dj * ds * ds);
}

}  // namespace hetgp
