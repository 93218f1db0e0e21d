#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>

#include <Eigen/Dense>

#include "hetgp/gp.hpp"

namespace hetgp {

/// Scalar ground truth y = mean_fn(x) + eps, eps ~ N(0, var_fn(x)).
struct GroundTruth {
    std::function<double(double)> mean_fn;
    std::function<double(double)> var_fn;
};

/// 0.5 (cos x + 1) with variance 0.19 x + 0.1, x in [0, 10].
[[nodiscard]] GroundTruth illustrative_truth();

/// Friction F(v): mean v + sin(3v), variance 0.8 max(0, v) + 0.2, v in [-1, 1].
[[nodiscard]] GroundTruth friction_truth();

/// x_i ~ U(0, 10), then y_i from illustrative_truth(). Draw order per sample: x, then noise.
[[nodiscard]] Dataset sample_illustrative(Eigen::Index n, std::uint64_t seed);

/// v_i ~ U(-1, 1), F_i ~ N(h(v_i), g(v_i)).
[[nodiscard]] Dataset sample_friction(Eigen::Index n, std::uint64_t seed);

/// Two-cluster set with zero mean: ceil(n/2) samples on [1, 2.5] with noise std 0.1,
/// the rest on [7.5, 9] with noise std 0.5. These levels are an illustrative choice.
[[nodiscard]] Dataset sample_motivating(Eigen::Index n, std::uint64_t seed);

inline constexpr double kMotivatingLowStd = 0.1;
inline constexpr double kMotivatingHighStd = 0.5;

/// Known part of x+ = f(x, u) + B (h(x) + eps). B must have full column rank.
class ResidualSpec {
public:
    using Nominal = std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

    ResidualSpec(Eigen::MatrixXd B, Nominal f);

    [[nodiscard]] const Eigen::MatrixXd& B() const noexcept { return B_; }
    [[nodiscard]] const Eigen::MatrixXd& B_pinv() const noexcept { return B_pinv_; }
    [[nodiscard]] Eigen::VectorXd nominal(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
        return f_(x, u);
    }

private:
    Eigen::MatrixXd B_;
    Eigen::MatrixXd B_pinv_;
    Nominal f_;
};

/// Double integrator with sample time Ts: f(x, u) = [p + Ts v; v + Ts u], B = [0; Ts].
/// With this B the extracted residual is -F(v).
[[nodiscard]] ResidualSpec double_integrator_spec(double Ts);

/// y = B^+ (x_next - f(x_k, u_k)).
[[nodiscard]] Eigen::VectorXd extract_residual(const ResidualSpec& spec, const Eigen::VectorXd& x_k,
                                               const Eigen::VectorXd& u_k,
                                               const Eigen::VectorXd& x_next);

/// CSV with header x_1,...,x_nx,y and 17 significant digits per value.
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);
[[nodiscard]] Dataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace hetgp
