#pragma once

#include <Eigen/Dense>

namespace hetgp {

struct QpOptions {
    int max_iterations = 100;
    double tolerance = 1e-10;
};

struct QpResult {
    Eigen::VectorXd x;
    Eigen::VectorXd multipliers;
    int iterations = 0;
    bool converged = false;
};

/// Dense convex QP  min 0.5 x'Qx + c'x  s.t.  Gx <= h,  Q positive definite.
///
/// Mehrotra predictor-corrector interior-point method. Infeasible problems end with
/// converged == false after max_iterations.
[[nodiscard]] QpResult solve_qp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c,
                                const Eigen::MatrixXd& G, const Eigen::VectorXd& h,
                                const QpOptions& options = {});

}  // namespace hetgp
