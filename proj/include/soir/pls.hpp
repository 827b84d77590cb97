#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "soir/errors.hpp"
#include "soir/image.hpp"

namespace soir {

/// Partial least squares (NIPALS, univariate response). Columns of Z and y
/// are centered internally; the `centered` flag records this.
struct PlsResult {
    MatrixXd weights;    ///< K x K0 deflated-space weight vectors
    MatrixXd scores;     ///< N x K0, mutually orthogonal columns
    MatrixXd loadings;   ///< K x K0
    VectorXd y_loadings; ///< K0
    VectorXd coefficients; ///< K, regression coefficients on centered Z
    double intercept = 0.0; ///< completes yhat = intercept + Z * coefficients
    bool centered = true;
    bool truncated = false; ///< stopped early on vanishing covariance
};

inline PlsResult pls_components(const MatrixXd& Z, const VectorXd& y, Eigen::Index K0) {
    const Eigen::Index N = Z.rows(), K = Z.cols();
    if (y.size() != N) throw std::invalid_argument("pls_components: row mismatch");
    if (K0 < 1 || K0 > std::min(N, K))
        throw std::invalid_argument("pls_components: K0 must be in [1, min(N, K)]");
    const double y_mean = y.mean();
    VectorXd yc = y.array() - y_mean;
    if (yc.norm() <= 0.0)
        throw DegenerateInputError("pls_components: constant response");
    const Eigen::RowVectorXd z_means = Z.colwise().mean();
    MatrixXd Zc = Z.rowwise() - z_means;

    PlsResult out;
    out.weights.resize(K, K0);
    out.scores.resize(N, K0);
    out.loadings.resize(K, K0);
    out.y_loadings.resize(K0);

    const double cov_scale = Zc.norm() * yc.norm() + 1e-300;
    Eigen::Index k = 0;
    for (; k < K0; ++k) {
        VectorXd w = Zc.transpose() * yc;
        const double wn = w.norm();
        if (wn <= 1e-12 * cov_scale) { out.truncated = true; break; }
        w /= wn;
        const VectorXd t = Zc * w;
        const double tt = t.squaredNorm();
        if (tt <= 0.0) { out.truncated = true; break; }
        const VectorXd p = Zc.transpose() * t / tt;
        const double q = yc.dot(t) / tt;
        out.weights.col(k) = w;
        out.scores.col(k) = t;
        out.loadings.col(k) = p;
        out.y_loadings[k] = q;
        Zc -= t * p.transpose();
        yc -= q * t;
    }
    if (k == 0) throw DegenerateInputError("pls_components: no covariance between Z and y");
    if (k < K0) {
        out.weights.conservativeResize(Eigen::NoChange, k);
        out.scores.conservativeResize(Eigen::NoChange, k);
        out.loadings.conservativeResize(Eigen::NoChange, k);
        out.y_loadings.conservativeResize(k);
    }
    // b = W (P'W)^{-1} q maps the deflated-space weights back to Z space
    const MatrixXd PtW = out.loadings.transpose() * out.weights;
    out.coefficients = out.weights * PtW.colPivHouseholderQr().solve(out.y_loadings);
    out.intercept = y_mean - z_means.dot(out.coefficients);
    return out;
}

} // namespace soir
