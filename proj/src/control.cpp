#include "hetgp/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hetgp/errors.hpp"
#include "hetgp/io.hpp"
#include "hetgp/parallel.hpp"
#include "hetgp/qp.hpp"
#include "hetgp/rng.hpp"

namespace hetgp {

namespace {

// Back-off so interior-point round-off cannot leave v_1 marginally outside its bound.
constexpr double kSolverMargin = 1e-8;

Eigen::VectorXd scalar_input(double v) { return Eigen::VectorXd::Constant(1, v); }

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n == 0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

bool in_windows(double t, const std::vector<std::pair<double, double>>& windows) {
    constexpr double eps = 1e-9;
    return std::any_of(windows.begin(), windows.end(), [&](const auto& w) {
        return t >= w.first - eps && t <= w.second + eps;
    });
}

double clamp_input(double u, const ControllerConfig& cfg) {
    return std::clamp(u, cfg.u_min, cfg.u_max);
}

}  // namespace

std::string to_string(GpMode mode) {
    switch (mode) {
        case GpMode::proposed:
            return "proposed";
        case GpMode::cautious:
            return "cautious";
        case GpMode::aggressive:
            return "aggressive";
        case GpMode::oracle:
            return "oracle";
    }
    return "unknown";
}

GpMode parse_gp_mode(const std::string& name) {
    for (const GpMode mode :
         {GpMode::proposed, GpMode::cautious, GpMode::aggressive, GpMode::oracle}) {
        if (to_string(mode) == name) {
            return mode;
        }
    }
    throw InputError("unknown gp mode '" + name + "'");
}

double ClassicalFriction::mean(double v) const { return model_.mean(scalar_input(v)); }

double ClassicalFriction::variance(double v) const {
    return predict(model_, scalar_input(v), 0.0).noise_variance;
}

double HetGPFriction::mean(double v) const { return model_.posterior.mean(scalar_input(v)); }

double HetGPFriction::variance(double v) const {
    const Eigen::VectorXd x = scalar_input(v);
    return predict(model_.posterior, x, model_.gamma(x)).noise_variance;
}

double LearningConfig::sigma0_for(GpMode mode) const {
    switch (mode) {
        case GpMode::proposed:
            return sigma0_proposed;
        case GpMode::cautious:
            return sigma0_cautious;
        case GpMode::aggressive:
            return sigma0_aggressive;
        case GpMode::oracle:
            return 0.0;
    }
    return 0.0;
}

std::unique_ptr<FrictionModel> make_friction_model(GpMode mode, const Dataset& training,
                                                   const LearningConfig& learning,
                                                   const GroundTruth& truth) {
    switch (mode) {
        case GpMode::proposed: {
            IterConfig iter;
            iter.delta = learning.delta;
            iter.max_iter = learning.max_iter;
            iter.sigma0_sq = learning.sigma0_proposed;
            iter.kernel = learning.kernel;
            return std::make_unique<HetGPFriction>(fit_hetgp(training, iter));
        }
        case GpMode::cautious:
        case GpMode::aggressive:
            return std::make_unique<ClassicalFriction>(
                fit_posterior_gp(training, learning.kernel, learning.sigma0_for(mode),
                                 Eigen::VectorXd::Zero(training.size())));
        case GpMode::oracle:
            return std::make_unique<OracleFriction>(truth);
    }
    throw InputError("unknown gp mode");
}

void PlantConfig::validate() const {
    if (!(Ts > 0.0) || !(sim_duration > 0.0)) {
        throw InputError("plant: Ts and sim_duration must be positive");
    }
    const double ratio = sim_duration / Ts;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio)) {
        throw InputError("plant: sim_duration must be an integer multiple of Ts");
    }
    if (!friction.mean_fn || !friction.var_fn) {
        throw InputError("plant: friction ground truth missing");
    }
}

int PlantConfig::steps() const { return static_cast<int>(std::lround(sim_duration / Ts)); }

double default_position_reference(double t) { return t < 2.0 ? 1.0 : 0.0; }

double two_sided_z(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw InputError("probability must lie in (0, 1)");
    }
    // Phi(z) - Phi(-z) = erf(z / sqrt 2) is increasing; bisect on it.
    double lo = 0.0;
    double hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (std::erf(mid / std::sqrt(2.0)) < p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

void ControllerConfig::validate() const {
    if (horizon < 1) {
        throw InputError("controller: horizon must be at least 1");
    }
    if (!(v_min < v_max) || !(u_min < u_max)) {
        throw InputError("controller: empty velocity or input box");
    }
    if (!(p_x > 0.0 && p_x < 1.0)) {
        throw InputError("controller: p_x must lie in (0, 1)");
    }
    if (std::abs(z_score - two_sided_z(p_x)) > 1e-3) {
        throw InputError("controller: z_score " + std::to_string(z_score) +
                         " does not match p_x quantile " + std::to_string(two_sided_z(p_x)));
    }
    if (!(q_p >= 0.0) || !(r_u > 0.0)) {
        throw InputError("controller: cost weights must satisfy q_p >= 0, r_u > 0");
    }
    if (sqp_iterations < 1 || !(fd_step > 0.0)) {
        throw InputError("controller: sqp_iterations >= 1 and fd_step > 0 required");
    }
    if (!p_ref) {
        throw InputError("controller: reference schedule missing");
    }
}

PlanResult plan_step(const PlantState& state, double t, const FrictionModel& model,
                     const ControllerConfig& cfg, double Ts, std::span<const double> warm_start) {
    const int H = cfg.horizon;
    PlanResult out;
    std::vector<double> u(static_cast<std::size_t>(H), 0.0);
    if (warm_start.size() == u.size()) {
        std::transform(warm_start.begin(), warm_start.end(), u.begin(),
                       [&](double value) { return clamp_input(value, cfg); });
    }

    std::vector<double> v_bar(static_cast<std::size_t>(H + 1));
    std::vector<double> p_bar(static_cast<std::size_t>(H + 1));
    std::vector<double> slope(static_cast<std::size_t>(H));
    std::vector<double> margin(static_cast<std::size_t>(H + 1), 0.0);

    Eigen::VectorXd p_ref(H);
    for (int k = 1; k <= H; ++k) {
        p_ref(k - 1) = cfg.p_ref(t + k * Ts);
    }

    // Rows 0..H-1 of the sensitivities belong to predicted steps 1..H.
    Eigen::MatrixXd Gv = Eigen::MatrixXd::Zero(H, H);
    Eigen::MatrixXd Gp = Eigen::MatrixXd::Zero(H, H);
    Eigen::MatrixXd G(4 * H, H);
    Eigen::VectorXd h(4 * H);

    auto fallback = [&] {
        const double v_mid = 0.5 * (cfg.v_min + cfg.v_max);
        out.u = clamp_input(model.mean(state.v) + (v_mid - state.v) / Ts, cfg);
        out.inputs.assign(static_cast<std::size_t>(H), out.u);
        out.fallback = true;
        return out;
    };

    for (int outer = 0; outer < cfg.sqp_iterations; ++outer) {
        v_bar[0] = state.v;
        p_bar[0] = state.p;
        double accumulated = 0.0;
        for (int k = 0; k < H; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            const double vk = v_bar[ks];
            const double mu = model.mean(vk);
            p_bar[ks + 1] = p_bar[ks] + Ts * vk;
            v_bar[ks + 1] = vk + Ts * (u[ks] - mu);
            const double dmu =
                (model.mean(vk + cfg.fd_step) - model.mean(vk - cfg.fd_step)) / (2.0 * cfg.fd_step);
            slope[ks] = 1.0 - Ts * dmu;
            accumulated += Ts * Ts * std::max(model.variance(vk), 0.0);
            margin[ks + 1] = cfg.z_score * std::sqrt(accumulated);
            if (cfg.v_min + margin[ks + 1] > cfg.v_max - margin[ks + 1]) {
                return fallback();
            }
        }

        Gv.setZero();
        Gp.setZero();
        for (int k = 0; k < H; ++k) {
            // dv_{k+1} = slope_k dv_k + Ts du_k,  dp_{k+1} = dp_k + Ts dv_k.
            if (k > 0) {
                Gv.row(k) = slope[static_cast<std::size_t>(k)] * Gv.row(k - 1);
                Gp.row(k) = Gp.row(k - 1) + Ts * Gv.row(k - 1);
            }
            Gv(k, k) += Ts;
        }

        const Eigen::Map<const Eigen::VectorXd> u_vec(u.data(), H);
        Eigen::VectorXd p_nom(H);
        Eigen::VectorXd v_nom(H);
        Eigen::VectorXd tight(H);
        for (int k = 0; k < H; ++k) {
            p_nom(k) = p_bar[static_cast<std::size_t>(k + 1)];
            v_nom(k) = v_bar[static_cast<std::size_t>(k + 1)];
            tight(k) = margin[static_cast<std::size_t>(k + 1)];
        }

        const Eigen::MatrixXd Q =
            2.0 * (cfg.q_p * Gp.transpose() * Gp + cfg.r_u * Eigen::MatrixXd::Identity(H, H));
        const Eigen::VectorXd c =
            2.0 * (cfg.q_p * Gp.transpose() * (p_nom - p_ref) + cfg.r_u * u_vec);

        G.topRows(H) = Gv;
        h.head(H) = (cfg.v_max - kSolverMargin) - tight.array() - v_nom.array();
        G.middleRows(H, H) = -Gv;
        h.segment(H, H) = v_nom.array() - (cfg.v_min + kSolverMargin) - tight.array();
        G.middleRows(2 * H, H).setIdentity();
        h.segment(2 * H, H) = cfg.u_max - u_vec.array();
        G.bottomRows(H) = -Eigen::MatrixXd::Identity(H, H);
        h.tail(H) = u_vec.array() - cfg.u_min;

        const QpResult qp = solve_qp(Q, c, G, h);
        if (!qp.converged) {
            return fallback();
        }
        for (int k = 0; k < H; ++k) {
            u[static_cast<std::size_t>(k)] = clamp_input(u[static_cast<std::size_t>(k)] + qp.x(k), cfg);
        }
    }

    out.u = u.front();
    out.inputs = std::move(u);
    out.tightening.assign(margin.begin() + 1, margin.end());
    return out;
}

std::vector<std::pair<double, double>> default_violation_windows() {
    return {{0.0, 1.0}, {2.0, 3.0}};
}

TrialResult run_trial(const PlantConfig& plant, const ControllerConfig& cfg,
                      const FrictionModel& model, std::uint64_t seed) {
    plant.validate();
    cfg.validate();
    Rng rng(seed);
    TrialResult out;
    out.seed = seed;
    out.violation_windows = default_violation_windows();

    const int steps = plant.steps();
    out.trajectory.reserve(static_cast<std::size_t>(steps));
    PlantState x{plant.p0, plant.v0};
    std::vector<double> warm;
    for (int k = 0; k < steps; ++k) {
        const double t = k * plant.Ts;
        const PlanResult plan = plan_step(x, t, model, cfg, plant.Ts, warm);
        if (plan.fallback) {
            ++out.fallback_steps;
        }
        // Shift the plan one step for the next warm start.
        warm.assign(plan.inputs.begin() + 1, plan.inputs.end());
        warm.push_back(plan.inputs.back());

        const double u = plan.u;
        out.trajectory.push_back({t, x.p, x.v, u});
        out.closed_loop_cost += cfg.q_p * std::pow(x.p - cfg.p_ref(t), 2) + cfg.r_u * u * u;
        if (in_windows(t, out.violation_windows)) {
            ++out.scored_steps;
            if (x.v < cfg.v_min || x.v > cfg.v_max) {
                ++out.violations;
            }
        }

        const double friction = plant.friction.mean_fn(x.v) +
                                std::sqrt(std::max(plant.friction.var_fn(x.v), 0.0)) * rng.normal();
        x = PlantState{x.p + plant.Ts * x.v, x.v + plant.Ts * (u - friction)};
    }
    return out;
}

void to_json(nlohmann::json& j, const ModeSummary& s) {
    j = nlohmann::json{
        {"mode", to_string(s.mode)},
        {"sigma0_sq", s.sigma0_sq},
        {"trials", s.trials},
        {"cost_min", s.cost_min},
        {"cost_median", s.cost_median},
        {"cost_max", s.cost_max},
        {"violation_pct", s.violation_pct},
        {"total_violations", s.total_violations},
        {"scored_steps", s.scored_steps},
        {"fallback_steps", s.fallback_steps},
        {"nonconverged_fits", s.nonconverged_fits},
    };
}

void to_json(nlohmann::json& j, const TrialResult& trial) {
    auto traj = nlohmann::json::array();
    for (const auto& pt : trial.trajectory) {
        traj.push_back({pt.t, pt.p, pt.v, pt.u});
    }
    auto windows = nlohmann::json::array();
    for (const auto& [a, b] : trial.violation_windows) {
        windows.push_back({a, b});
    }
    j = nlohmann::json{
        {"seed", trial.seed},
        {"closed_loop_cost", trial.closed_loop_cost},
        {"violations", trial.violations},
        {"scored_steps", trial.scored_steps},
        {"fallback_steps", trial.fallback_steps},
        {"violation_windows", windows},
        {"trajectory", traj},
    };
}

ModeSummary summarize(GpMode mode, double sigma0_sq, const std::vector<TrialResult>& trials) {
    if (trials.empty()) {
        throw InputError("summarize: no trials");
    }
    ModeSummary s;
    s.mode = mode;
    s.sigma0_sq = sigma0_sq;
    s.trials = static_cast<int>(trials.size());
    std::vector<double> costs;
    costs.reserve(trials.size());
    for (const auto& tr : trials) {
        costs.push_back(tr.closed_loop_cost);
        s.total_violations += tr.violations;
        s.scored_steps += tr.scored_steps;
        s.fallback_steps += tr.fallback_steps;
    }
    std::sort(costs.begin(), costs.end());
    s.cost_min = costs.front();
    s.cost_max = costs.back();
    s.cost_median = median_of(costs);
    s.violation_pct = s.scored_steps > 0
                          ? 100.0 * static_cast<double>(s.total_violations) /
                                static_cast<double>(s.scored_steps)
                          : 0.0;
    return s;
}

MonteCarloResult monte_carlo(const PlantConfig& plant, const ControllerConfig& cfg,
                             const MonteCarloConfig& mc) {
    plant.validate();
    cfg.validate();
    if (mc.trials < 1) {
        throw InputError("monte_carlo: trials must be at least 1");
    }
    const auto n_modes = mc.modes.size();
    const auto n_trials = static_cast<std::size_t>(mc.trials);
    MonteCarloResult out;
    out.runs.assign(n_modes, std::vector<TrialResult>(n_trials));
    std::vector<std::vector<int>> nonconverged(n_modes, std::vector<int>(n_trials, 0));

    parallel_for(n_trials, [&](std::size_t i) {
        const std::uint64_t trial_seed = derive_seed(mc.base_seed, i);
        const Dataset training = sample_friction(mc.learning.n_train, derive_seed(trial_seed, 0));
        const std::uint64_t plant_seed = derive_seed(trial_seed, 1);
        for (std::size_t m = 0; m < n_modes; ++m) {
            const auto model =
                make_friction_model(mc.modes[m], training, mc.learning, plant.friction);
            if (const auto* het = dynamic_cast<const HetGPFriction*>(model.get())) {
                nonconverged[m][i] = het->model().report.converged ? 0 : 1;
            }
            ControllerConfig mode_cfg = cfg;
            mode_cfg.gp_mode = mc.modes[m];
            out.runs[m][i] = run_trial(plant, mode_cfg, *model, plant_seed);
        }
    });

    for (std::size_t m = 0; m < n_modes; ++m) {
        ModeSummary s = summarize(mc.modes[m], mc.learning.sigma0_for(mc.modes[m]), out.runs[m]);
        for (const int flag : nonconverged[m]) {
            s.nonconverged_fits += flag;
        }
        out.summaries.push_back(s);
    }
    return out;
}

std::vector<BandPoint> trajectory_band(const std::vector<TrialResult>& trials) {
    if (trials.empty()) {
        return {};
    }
    const std::size_t steps = trials.front().trajectory.size();
    std::vector<BandPoint> band(steps);
    std::vector<double> ps(trials.size());
    std::vector<double> vs(trials.size());
    for (std::size_t k = 0; k < steps; ++k) {
        for (std::size_t i = 0; i < trials.size(); ++i) {
            if (trials[i].trajectory.size() != steps) {
                throw InputError("trajectory_band: trials have different lengths");
            }
            ps[i] = trials[i].trajectory[k].p;
            vs[i] = trials[i].trajectory[k].v;
        }
        // Sort copies so the result does not depend on trial order.
        std::vector<double> sorted_v = vs;
        std::sort(sorted_v.begin(), sorted_v.end());
        double mean = 0.0;
        for (const double v : sorted_v) {
            mean += v;
        }
        mean /= static_cast<double>(sorted_v.size());
        double var = 0.0;
        for (const double v : sorted_v) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<double>(sorted_v.size());
        band[k] = BandPoint{trials.front().trajectory[k].t, median_of(ps), median_of(sorted_v),
                            std::sqrt(var)};
    }
    return band;
}

void write_trajectory_csv(const std::filesystem::path& path, const TrialResult& trial) {
    std::vector<std::vector<double>> rows;
    rows.reserve(trial.trajectory.size());
    for (const auto& pt : trial.trajectory) {
        rows.push_back({pt.t, pt.p, pt.v, pt.u});
    }
    write_csv(path, {"t", "p", "v", "u"}, rows);
}

}  // namespace hetgp
