#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "soir/errors.hpp"
#include "soir/image.hpp"

namespace soir {

enum class SmoothingSelector { GCV, REML };

/// min_b ||y - Z b||^2 + lambda b' P b with the smoothing parameter chosen
/// on a finite grid.
struct PenalizedLSProblem {
    VectorXd response;
    MatrixXd design;
    MatrixXd penalty;
    std::vector<double> lambda_grid;
    SmoothingSelector selector = SmoothingSelector::GCV;
};

struct PenalizedLSResult {
    VectorXd coefficients;
    double lambda = 0.0;
    double edf = 0.0;   ///< tr(H) at the selected lambda
    double rss = 0.0;   ///< unpenalized residual sum of squares
    double sigma2 = 0.0; ///< rss / (N - edf), floored at 0
    double score = 0.0; ///< selection criterion value at the chosen lambda
};

inline std::vector<double> log_spaced_grid(double lo, double hi, int count = 25) {
    if (lo <= 0.0 || hi <= lo || count < 2)
        throw std::invalid_argument("log_spaced_grid: need 0 < lo < hi and count >= 2");
    std::vector<double> grid(static_cast<std::size_t>(count));
    const double llo = std::log(lo), lhi = std::log(hi);
    for (int i = 0; i < count; ++i)
        grid[static_cast<std::size_t>(i)] = std::exp(llo + (lhi - llo) * i / (count - 1));
    return grid;
}

namespace detail {

/// Dimension of the penalty null space (eigenvalues below tol * max).
inline Eigen::Index penalty_nullity(const MatrixXd& P) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(P, Eigen::EigenvaluesOnly);
    const VectorXd ev = es.eigenvalues();
    const double tol = std::max(ev.cwiseAbs().maxCoeff(), 1.0) * 1e-12;
    Eigen::Index nullity = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev[i] < tol) ++nullity;
    return nullity;
}

} // namespace detail

/// Grid search over lambda. GCV(lambda) = N * RSS / (N - tr(H))^2; REML is the
/// Gaussian restricted likelihood with sigma^2 profiled out, treating penalty
/// null-space directions as unpenalized fixed effects. Ties prefer the larger
/// lambda.
inline PenalizedLSResult solve_penalized_ls(const PenalizedLSProblem& problem) {
    const Eigen::Index N = problem.response.size();
    const Eigen::Index K = problem.design.cols();
    if (N < 2) throw std::invalid_argument("solve_penalized_ls: need N >= 2");
    if (problem.design.rows() != N)
        throw std::invalid_argument("solve_penalized_ls: design rows do not match response");
    if (problem.penalty.rows() != K || problem.penalty.cols() != K)
        throw std::invalid_argument("solve_penalized_ls: penalty dimension mismatch");
    if (problem.lambda_grid.empty())
        throw std::invalid_argument("solve_penalized_ls: empty lambda grid");
    if (!problem.design.allFinite())
        throw std::invalid_argument("solve_penalized_ls: non-finite design");

    const MatrixXd C = problem.design.transpose() * problem.design;
    const VectorXd g = problem.design.transpose() * problem.response;
    const double yty = problem.response.squaredNorm();
    const Eigen::Index nullity = detail::penalty_nullity(problem.penalty);
    const Eigen::Index rank_P = K - nullity;
    const double n_restricted = static_cast<double>(N - nullity);

    std::vector<double> grid = problem.lambda_grid;
    std::sort(grid.begin(), grid.end());

    PenalizedLSResult best;
    bool found = false;
    for (const double lambda : grid) {
        if (!(lambda > 0.0))
            throw std::invalid_argument("solve_penalized_ls: lambda grid must be positive");
        const MatrixXd A = C + lambda * problem.penalty;
        Eigen::LDLT<MatrixXd> ldlt(A);
        if (ldlt.info() != Eigen::Success) continue;
        const VectorXd d = ldlt.vectorD();
        const double dmax = d.maxCoeff();
        if (dmax <= 0.0 || d.minCoeff() < dmax * 1e-13) continue; // numerically singular
        const VectorXd b = ldlt.solve(g);
        const double rss = std::max(yty - 2.0 * b.dot(g) + b.dot(C * b), 0.0);
        double score;
        double edf = -1.0;
        if (problem.selector == SmoothingSelector::GCV) {
            edf = ldlt.solve(C).trace();
            const double denom = static_cast<double>(N) - edf;
            if (denom <= 0.0) continue;
            score = static_cast<double>(N) * rss / (denom * denom);
        } else {
            const double pen = b.dot(problem.penalty * b);
            const double sigma2 = std::max(rss + lambda * pen, 1e-300) / n_restricted;
            const double logdet = d.array().max(1e-300).log().sum();
            score = n_restricted * std::log(sigma2) + logdet - static_cast<double>(rank_P) * std::log(lambda);
        }
        const double tol = 1e-12 * (1.0 + std::abs(score));
        if (!found || score < best.score - tol || score <= best.score + tol) {
            best.coefficients = b;
            best.lambda = lambda;
            best.edf = edf;
            best.rss = rss;
            best.score = score;
            found = true;
        }
    }
    if (!found)
        throw RankDeficiencyError("solve_penalized_ls: design + penalty singular at every grid point");
    if (best.edf < 0.0) { // REML path defers the trace to the selected lambda
        Eigen::LDLT<MatrixXd> ldlt(MatrixXd(C + best.lambda * problem.penalty));
        best.edf = ldlt.solve(C).trace();
    }
    const double dof = static_cast<double>(N) - best.edf;
    best.sigma2 = dof > 0.0 ? best.rss / dof : 0.0;
    return best;
}

/// Posterior covariance of the penalized coefficients at a fixed lambda:
/// sigma2 * (Z'Z + lambda P)^{-1}.
inline MatrixXd penalized_ls_covariance(const MatrixXd& design, const MatrixXd& penalty,
                                        double lambda, double sigma2) {
    const MatrixXd A = design.transpose() * design + lambda * penalty;
    Eigen::LDLT<MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success)
        throw RankDeficiencyError("penalized_ls_covariance: singular system");
    return sigma2 * ldlt.solve(MatrixXd::Identity(design.cols(), design.cols()));
}

} // namespace soir
