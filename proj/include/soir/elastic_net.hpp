#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "soir/errors.hpp"
#include "soir/image.hpp"

namespace soir {

/// Coordinate-descent solutions of
///   (1/2N) ||y - Z b||^2 + lambda (eta ||b||_1 + (1-eta)/2 ||b||^2)
/// along a descending lambda path (naive elastic net, no rescaling).
struct ElasticNetPath {
    std::vector<double> lambdas;
    MatrixXd coefficients; ///< K x path length, column j solves at lambdas[j]
};

inline double elastic_net_lambda_max(const MatrixXd& Z, const VectorXd& y, double eta) {
    const double n = static_cast<double>(Z.rows());
    return (Z.transpose() * y).cwiseAbs().maxCoeff() / (n * std::max(eta, 1e-3));
}

inline std::vector<double> elastic_net_default_path(const MatrixXd& Z, const VectorXd& y,
                                                    double eta, int length = 100) {
    const double lmax = elastic_net_lambda_max(Z, y, eta);
    std::vector<double> path(static_cast<std::size_t>(length));
    const double llo = std::log(std::max(lmax, 1e-300) * 1e-4), lhi = std::log(std::max(lmax, 1e-300));
    for (int i = 0; i < length; ++i)
        path[static_cast<std::size_t>(i)] = std::exp(lhi + (llo - lhi) * i / (length - 1));
    return path;
}

namespace detail {

inline double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

} // namespace detail

inline ElasticNetPath elastic_net(const MatrixXd& Z, const VectorXd& y, double eta,
                                  std::vector<double> lambda_path = {},
                                  double tolerance = 1e-7, int max_sweeps = 200000) {
    const Eigen::Index N = Z.rows(), K = Z.cols();
    if (y.size() != N) throw std::invalid_argument("elastic_net: row mismatch");
    if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("elastic_net: eta must lie in [0, 1]");
    if (lambda_path.empty()) lambda_path = elastic_net_default_path(Z, y, eta);

    const double n = static_cast<double>(N);
    VectorXd col_scale(K); // z_j'z_j / N
    for (Eigen::Index j = 0; j < K; ++j) col_scale[j] = Z.col(j).squaredNorm() / n;

    ElasticNetPath out;
    out.lambdas = lambda_path;
    out.coefficients = MatrixXd::Zero(K, static_cast<Eigen::Index>(lambda_path.size()));

    VectorXd b = VectorXd::Zero(K);
    VectorXd r = y;
    std::vector<Eigen::Index> active;
    active.reserve(static_cast<std::size_t>(K));

    auto update_coord = [&](Eigen::Index j, double lambda) -> double {
        if (col_scale[j] <= 0.0) return 0.0;
        const double rho = Z.col(j).dot(r) / n + col_scale[j] * b[j];
        const double bn = detail::soft_threshold(rho, lambda * eta) /
                          (col_scale[j] + lambda * (1.0 - eta));
        const double delta = bn - b[j];
        if (delta != 0.0) {
            r -= delta * Z.col(j);
            b[j] = bn;
        }
        return std::abs(delta);
    };

    for (std::size_t li = 0; li < lambda_path.size(); ++li) {
        const double lambda = lambda_path[li];
        if (lambda < 0.0) throw std::invalid_argument("elastic_net: negative lambda");
        if (lambda == 0.0) {
            // exact unregularized solution; coordinate descent has no contraction here
            Eigen::LDLT<MatrixXd> ldlt(MatrixXd(Z.transpose() * Z));
            const VectorXd d = ldlt.vectorD();
            if (ldlt.info() != Eigen::Success || d.minCoeff() < d.maxCoeff() * 1e-12)
                throw RankDeficiencyError("elastic_net: lambda = 0 with rank-deficient design");
            b = ldlt.solve(Z.transpose() * y);
            r = y - Z * b;
            out.coefficients.col(static_cast<Eigen::Index>(li)) = b;
            continue;
        }
        int sweeps = 0;
        for (;;) {
            // full pass, collecting the active set
            double max_delta = 0.0;
            active.clear();
            for (Eigen::Index j = 0; j < K; ++j) {
                max_delta = std::max(max_delta, update_coord(j, lambda));
                if (b[j] != 0.0) active.push_back(j);
            }
            ++sweeps;
            if (max_delta < tolerance) break;
            // inner cycles on the active set
            for (;;) {
                double inner_delta = 0.0;
                for (const Eigen::Index j : active) inner_delta = std::max(inner_delta, update_coord(j, lambda));
                ++sweeps;
                if (inner_delta < tolerance || sweeps > max_sweeps) break;
            }
            if (sweeps > max_sweeps)
                throw ConvergenceError("elastic_net: coordinate descent exceeded sweep budget");
        }
        out.coefficients.col(static_cast<Eigen::Index>(li)) = b;
    }
    return out;
}

/// Worst KKT violation of a solution; used by tests and the acceptance suite.
inline double elastic_net_kkt_residual(const MatrixXd& Z, const VectorXd& y, double eta,
                                       double lambda, const VectorXd& b) {
    const double n = static_cast<double>(Z.rows());
    const VectorXd r = y - Z * b;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
        const double grad = Z.col(j).dot(r) / n - lambda * (1.0 - eta) * b[j];
        if (b[j] == 0.0) {
            worst = std::max(worst, std::abs(grad) - lambda * eta);
        } else {
            worst = std::max(worst, std::abs(grad - lambda * eta * (b[j] > 0.0 ? 1.0 : -1.0)));
        }
    }
    return worst;
}

} // namespace soir
