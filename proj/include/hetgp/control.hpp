#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hetgp/datagen.hpp"
#include "hetgp/gp.hpp"
#include "hetgp/iterative.hpp"

namespace hetgp {

/// Which friction model the controller is given.
enum class GpMode { proposed, cautious, aggressive, oracle };

[[nodiscard]] std::string to_string(GpMode mode);
[[nodiscard]] GpMode parse_gp_mode(const std::string& name);

/// Friction model seen by the controller: mean mu_F(v) and predictive variance s_F(v)^2.
class FrictionModel {
public:
    virtual ~FrictionModel() = default;
    [[nodiscard]] virtual double mean(double v) const = 0;
    [[nodiscard]] virtual double variance(double v) const = 0;
};

/// Constant-noise GP; variance is the total predictive variance.
class ClassicalFriction final : public FrictionModel {
public:
    explicit ClassicalFriction(GPModel model) : model_(std::move(model)) {}
    [[nodiscard]] double mean(double v) const override;
    [[nodiscard]] double variance(double v) const override;
    [[nodiscard]] const GPModel& model() const noexcept { return model_; }

private:
    GPModel model_;
};

/// Heteroscedastic GP; variance is Lambda(v) with gamma(v) from the prior-GP.
class HetGPFriction final : public FrictionModel {
public:
    explicit HetGPFriction(HetGP model) : model_(std::move(model)) {}
    [[nodiscard]] double mean(double v) const override;
    [[nodiscard]] double variance(double v) const override;
    [[nodiscard]] const HetGP& model() const noexcept { return model_; }

private:
    HetGP model_;
};

/// The true friction mean and noise variance.
class OracleFriction final : public FrictionModel {
public:
    explicit OracleFriction(GroundTruth truth) : truth_(std::move(truth)) {}
    [[nodiscard]] double mean(double v) const override { return truth_.mean_fn(v); }
    [[nodiscard]] double variance(double v) const override { return truth_.var_fn(v); }

private:
    GroundTruth truth_;
};

/// How each mode's friction model is learned from training samples.
struct LearningConfig {
    Eigen::Index n_train = 100;
    KernelConfig kernel{5.0, 1e-10};
    double sigma0_proposed = 1.0;
    double sigma0_cautious = 1.0;
    double sigma0_aggressive = 0.2;
    double delta = 1e-6;
    int max_iter = 200;

    [[nodiscard]] double sigma0_for(GpMode mode) const;
};

/// Fits the model for `mode` on friction samples (oracle ignores the data).
[[nodiscard]] std::unique_ptr<FrictionModel> make_friction_model(GpMode mode,
                                                                 const Dataset& training,
                                                                 const LearningConfig& learning,
                                                                 const GroundTruth& truth);

/// Double integrator p+ = p + Ts v, v+ = v + Ts (u - F(v)), F ~ N(h(v), g(v)).
struct PlantConfig {
    double Ts = 0.05;
    double sim_duration = 4.0;
    GroundTruth friction = friction_truth();
    double p0 = 0.0;
    double v0 = 0.0;

    void validate() const;
    [[nodiscard]] int steps() const;
};

/// 1 before t = 2 s, 0 afterwards.
[[nodiscard]] double default_position_reference(double t);

struct ControllerConfig {
    int horizon = 20;
    double v_min = -1.0;
    double v_max = 1.0;
    double p_x = 0.9544;
    /// Tightening multiplier; must match the two-sided normal quantile of p_x.
    double z_score = 2.0;
    double q_p = 10.0;
    double r_u = 1.0;
    double u_min = -10.0;
    double u_max = 10.0;
    int sqp_iterations = 5;
    double fd_step = 1e-4;
    std::function<double(double)> p_ref = default_position_reference;
    GpMode gp_mode = GpMode::proposed;

    void validate() const;
};

/// Two-sided standard-normal quantile: Phi^{-1}((1 + p) / 2).
[[nodiscard]] double two_sided_z(double p);

struct PlantState {
    double p = 0.0;
    double v = 0.0;
};

struct PlanResult {
    double u = 0.0;
    /// Full input sequence; reused as the next warm start.
    std::vector<double> inputs;
    /// z * sigma_k for predicted steps k = 1..H.
    std::vector<double> tightening;
    bool fallback = false;
};

/// One receding-horizon solve at time t: minimizes sum q (p_k - p_ref)^2 + r u_k^2 under
/// tightened velocity bounds by sequential QP around the warm-start plan.
[[nodiscard]] PlanResult plan_step(const PlantState& state, double t, const FrictionModel& model,
                                   const ControllerConfig& cfg, double Ts,
                                   std::span<const double> warm_start = {});

struct TrajectoryPoint {
    double t = 0.0;
    double p = 0.0;
    double v = 0.0;
    double u = 0.0;
};

struct TrialResult {
    std::uint64_t seed = 0;
    std::vector<TrajectoryPoint> trajectory;
    double closed_loop_cost = 0.0;
    int violations = 0;
    int scored_steps = 0;
    int fallback_steps = 0;
    std::vector<std::pair<double, double>> violation_windows;
};

/// Scored windows for velocity violations, in seconds.
[[nodiscard]] std::vector<std::pair<double, double>> default_violation_windows();

/// Closed-loop simulation; plant noise is drawn from Rng(seed).
[[nodiscard]] TrialResult run_trial(const PlantConfig& plant, const ControllerConfig& cfg,
                                    const FrictionModel& model, std::uint64_t seed);

struct ModeSummary {
    GpMode mode = GpMode::proposed;
    double sigma0_sq = 0.0;
    int trials = 0;
    double cost_min = 0.0;
    double cost_median = 0.0;
    double cost_max = 0.0;
    double violation_pct = 0.0;
    long total_violations = 0;
    long scored_steps = 0;
    long fallback_steps = 0;
    int nonconverged_fits = 0;
};

void to_json(nlohmann::json& j, const ModeSummary& summary);
void to_json(nlohmann::json& j, const TrialResult& trial);

/// Reduces trials to min/median/max cost and pooled violation percentage. Order-independent.
[[nodiscard]] ModeSummary summarize(GpMode mode, double sigma0_sq,
                                    const std::vector<TrialResult>& trials);

struct MonteCarloConfig {
    int trials = 100;
    std::uint64_t base_seed = 0;
    std::vector<GpMode> modes{GpMode::proposed, GpMode::aggressive, GpMode::cautious};
    LearningConfig learning{};
};

struct MonteCarloResult {
    std::vector<ModeSummary> summaries;
    /// runs[m][i]: mode m, trial i.
    std::vector<std::vector<TrialResult>> runs;
};

/// Each trial i draws fresh friction data and plant noise from streams of
/// derive_seed(base_seed, i); all modes within a trial share both.
[[nodiscard]] MonteCarloResult monte_carlo(const PlantConfig& plant, const ControllerConfig& cfg,
                                           const MonteCarloConfig& mc);

struct BandPoint {
    double t = 0.0;
    double p_median = 0.0;
    double v_median = 0.0;
    double v_std = 0.0;
};

/// Pointwise-in-time statistics across trials: median p and v, and the spread of v.
[[nodiscard]] std::vector<BandPoint> trajectory_band(const std::vector<TrialResult>& trials);

void write_trajectory_csv(const std::filesystem::path& path, const TrialResult& trial);

}  // namespace hetgp
