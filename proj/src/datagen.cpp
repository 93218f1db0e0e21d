#include "hetgp/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "hetgp/errors.hpp"
#include "hetgp/io.hpp"
#include "hetgp/rng.hpp"

namespace hetgp {

GroundTruth illustrative_truth() {
    return GroundTruth{
        [](double x) { return 0.5 * (std::cos(x) + 1.0); },
        [](double x) { return 0.19 * x + 0.1; },
    };
}

GroundTruth friction_truth() {
    return GroundTruth{
        [](double v) { return v + std::sin(3.0 * v); },
        [](double v) { return 0.8 * std::max(0.0, v) + 0.2; },
    };
}

namespace {

Dataset sample_uniform_truth(Eigen::Index n, std::uint64_t seed, double lo, double hi,
                             const GroundTruth& truth) {
    if (n < 1) {
        throw InputError("sample size must be at least 1");
    }
    Rng rng(seed);
    Dataset data{InputMatrix(1, n), Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = rng.uniform(lo, hi);
        const double eps = std::sqrt(truth.var_fn(x)) * rng.normal();
        data.X(0, i) = x;
        data.Y(i) = truth.mean_fn(x) + eps;
    }
    return data;
}

}  // namespace

Dataset sample_illustrative(Eigen::Index n, std::uint64_t seed) {
    return sample_uniform_truth(n, seed, 0.0, 10.0, illustrative_truth());
}

Dataset sample_friction(Eigen::Index n, std::uint64_t seed) {
    return sample_uniform_truth(n, seed, -1.0, 1.0, friction_truth());
}

Dataset sample_motivating(Eigen::Index n, std::uint64_t seed) {
    if (n < 1) {
        throw InputError("sample size must be at least 1");
    }
    Rng rng(seed);
    const Eigen::Index low_count = (n + 1) / 2;
    Dataset data{InputMatrix(1, n), Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool low = i < low_count;
        data.X(0, i) = low ? rng.uniform(1.0, 2.5) : rng.uniform(7.5, 9.0);
        data.Y(i) = (low ? kMotivatingLowStd : kMotivatingHighStd) * rng.normal();
    }
    return data;
}

ResidualSpec::ResidualSpec(Eigen::MatrixXd B, Nominal f) : B_(std::move(B)), f_(std::move(f)) {
    if (B_.size() == 0) {
        throw InputError("residual spec: B is empty");
    }
    if (!f_) {
        throw InputError("residual spec: nominal dynamics missing");
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(1e-10);
    cod.compute(B_);
    if (cod.rank() != B_.cols()) {
        throw InputError("residual spec: B (" + std::to_string(B_.rows()) + "x" +
                         std::to_string(B_.cols()) + ") has rank " + std::to_string(cod.rank()) +
                         ", full column rank required");
    }
    B_pinv_ = cod.pseudoInverse();
}

ResidualSpec double_integrator_spec(double Ts) {
    if (!(Ts > 0.0)) {
        throw InputError("double integrator: Ts must be positive");
    }
    Eigen::MatrixXd B(2, 1);
    B << 0.0, Ts;
    return ResidualSpec(B, [Ts](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
        Eigen::VectorXd next(2);
        next << x(0) + Ts * x(1), x(1) + Ts * u(0);
        return next;
    });
}

Eigen::VectorXd extract_residual(const ResidualSpec& spec, const Eigen::VectorXd& x_k,
                                 const Eigen::VectorXd& u_k, const Eigen::VectorXd& x_next) {
    if (x_k.size() != spec.B().rows() || x_next.size() != spec.B().rows()) {
        throw InputError("extract_residual: state dimension does not match B");
    }
    const Eigen::VectorXd predicted = spec.nominal(x_k, u_k);
    if (predicted.size() != x_next.size()) {
        throw InputError("extract_residual: nominal dynamics returned the wrong dimension");
    }
    return spec.B_pinv() * (x_next - predicted);
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
    data.validate();
    std::vector<std::string> header;
    for (Eigen::Index d = 0; d < data.input_dim(); ++d) {
        header.push_back("x_" + std::to_string(d + 1));
    }
    header.emplace_back("y");
    std::vector<std::vector<double>> rows;
    rows.reserve(static_cast<std::size_t>(data.size()));
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        std::vector<double> row(data.X.col(i).data(), data.X.col(i).data() + data.input_dim());
        row.push_back(data.Y(i));
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open " + path.string(), 0);
    }
    std::string line;
    std::size_t line_no = 0;
    std::size_t columns = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto header = split_csv_line(line);
        if (header.size() < 2 || header.back() != "y") {
            throw ParseError("expected header x_1,...,x_nx,y", line_no);
        }
        for (std::size_t d = 0; d + 1 < header.size(); ++d) {
            if (header[d] != "x_" + std::to_string(d + 1)) {
                throw ParseError("expected header column x_" + std::to_string(d + 1), line_no);
            }
        }
        columns = header.size();
        break;
    }
    if (columns == 0) {
        throw ParseError("no data rows", 0);
    }

    std::vector<double> values;
    Eigen::Index rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != columns) {
            throw ParseError("expected " + std::to_string(columns) + " fields, found " +
                                 std::to_string(fields.size()),
                             line_no);
        }
        for (const auto field : fields) {
            double v = 0.0;
            if (!parse_double(field, v) || !std::isfinite(v)) {
                throw ParseError("malformed number '" + std::string(field) + "'", line_no);
            }
            values.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) {
        throw ParseError("no data rows", 0);
    }

    const auto nx = static_cast<Eigen::Index>(columns - 1);
    Dataset data{InputMatrix(nx, rows), Eigen::VectorXd(rows)};
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index d = 0; d < nx; ++d) {
            data.X(d, i) = values[static_cast<std::size_t>(i * (nx + 1) + d)];
        }
        data.Y(i) = values[static_cast<std::size_t>(i * (nx + 1) + nx)];
    }
    return data;
}

}  // namespace hetgp
