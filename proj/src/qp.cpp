#include "hetgp/qp.hpp"

#include <algorithm>
#include <cmath>

#include "hetgp/errors.hpp"

namespace hetgp {

namespace {

// Largest step in (0, 1] keeping v + step * dv >= 0.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double step = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (dv(i) < 0.0) {
            step = std::min(step, -v(i) / dv(i));
        }
    }
    return step;
}

}  // namespace

QpResult solve_qp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c, const Eigen::MatrixXd& G,
                  const Eigen::VectorXd& h, const QpOptions& options) {
    const Eigen::Index n = Q.rows();
    const Eigen::Index m = G.rows();
    if (Q.cols() != n || c.size() != n || (m > 0 && G.cols() != n) || h.size() != m) {
        throw InputError("solve_qp: inconsistent problem dimensions");
    }

    QpResult result;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (m == 0) {
        Eigen::LLT<Eigen::MatrixXd> llt(Q);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("solve_qp: Q is not positive definite");
        }
        result.x = llt.solve(-c);
        result.converged = true;
        return result;
    }

    Eigen::VectorXd s = (h - G * x).cwiseMax(1.0);
    Eigen::VectorXd z = Eigen::VectorXd::Ones(m);
    const double scale = 1.0 + std::max(c.lpNorm<Eigen::Infinity>(), h.lpNorm<Eigen::Infinity>());

    for (int iter = 0;; ++iter) {
        const Eigen::VectorXd r_dual = Q * x + c + G.transpose() * z;
        const Eigen::VectorXd r_prim = G * x + s - h;
        const double mu = s.dot(z) / static_cast<double>(m);
        result.iterations = iter;
        if (r_dual.lpNorm<Eigen::Infinity>() <= options.tolerance * scale &&
            r_prim.lpNorm<Eigen::Infinity>() <= options.tolerance * scale &&
            mu <= options.tolerance * scale) {
            result.converged = true;
            break;
        }
        if (iter == options.max_iterations) {
            break;
        }

        const Eigen::VectorXd w = z.cwiseQuotient(s);
        const Eigen::MatrixXd reduced = Q + G.transpose() * w.asDiagonal() * G;
        const Eigen::LLT<Eigen::MatrixXd> llt(reduced);
        if (llt.info() != Eigen::Success) {
            break;
        }

        // Newton direction for complementarity residual r_c = s.*z - target.
        auto direction = [&](const Eigen::VectorXd& r_c, Eigen::VectorXd& dx, Eigen::VectorXd& ds,
                             Eigen::VectorXd& dz) {
            const Eigen::VectorXd rhs =
                -r_dual - G.transpose() * (w.cwiseProduct(r_prim) - r_c.cwiseQuotient(s));
            dx = llt.solve(rhs);
            dz = w.cwiseProduct(G * dx + r_prim) - r_c.cwiseQuotient(s);
            ds = -(r_c + s.cwiseProduct(dz)).cwiseQuotient(z);
        };

        Eigen::VectorXd dx;
        Eigen::VectorXd ds;
        Eigen::VectorXd dz;
        direction(s.cwiseProduct(z), dx, ds, dz);
        const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
        const double mu_aff = (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(m);
        const double sigma = std::pow(mu_aff / mu, 3);

        const Eigen::VectorXd r_c =
            s.cwiseProduct(z) + ds.cwiseProduct(dz) - Eigen::VectorXd::Constant(m, sigma * mu);
        direction(r_c, dx, ds, dz);
        const double step = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(z, dz)));
        x += step * dx;
        s += step * ds;
        z += step * dz;
    }

    result.x = std::move(x);
    result.multipliers = std::move(z);
    return result;
}

}  // namespace hetgp
