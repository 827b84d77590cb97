#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "soir/errors.hpp"
#include "soir/image.hpp"
#include "soir/penalized_ls.hpp"
#include "soir/spline_basis.hpp"

namespace soir {

struct PcaResult {
    MatrixXd components;      ///< K x K0 right singular vectors
    MatrixXd scores;          ///< N x K0 (= M * components)
    VectorXd singular_values; ///< descending
    bool truncated_to_rank = false;
};

/// Leading right singular vectors of M. Sign convention: the entry of largest
/// magnitude in each component is positive, so repeated runs and alternative
/// backends agree.
inline PcaResult pca_svd(const MatrixXd& M, Eigen::Index K0) {
    if (K0 < 1 || K0 > std::min(M.rows(), M.cols()))
        throw std::invalid_argument("pca_svd: K0 must be in [1, min(N, K)]");
    Eigen::BDCSVD<MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd& sv = svd.singularValues();
    const double tol = std::max(M.rows(), M.cols()) * sv[0] * 1e-12;
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] > tol) ++rank;
    PcaResult out;
    out.truncated_to_rank = rank < K0;
    const Eigen::Index kept = std::min(K0, std::max<Eigen::Index>(rank, 1));
    out.components = svd.matrixV().leftCols(kept);
    out.singular_values = sv.head(kept);
    for (Eigen::Index k = 0; k < kept; ++k) {
        Eigen::Index imax = 0;
        out.components.col(k).cwiseAbs().maxCoeff(&imax);
        if (out.components(imax, k) < 0.0) out.components.col(k) = -out.components.col(k);
    }
    out.scores = M * out.components;
    return out;
}

/// Orthonormal rank-one eigenimages with scores and singular values.
struct EigenimageSet {
    int nx = 0;
    int ny = 0;
    MatrixXd components;      ///< L x K, orthonormal columns, each vec(u (x) v)
    MatrixXd scores;          ///< N x K = X * components
    VectorXd singular_values; ///< descending

    Eigen::Index count() const { return components.cols(); }
    Image2D component_image(Eigen::Index k) const { return Image2D(nx, ny, components.col(k)); }
};

namespace detail {

/// One penalized update of a marginal profile: solve
/// (s I + lambda D'D) u = z with lambda chosen by GCV over the grid.
/// Uses the eigendecomposition of the marginal penalty, computed once.
struct MarginalSmoother {
    MatrixXd eigvec;
    VectorXd eigval;

    explicit MarginalSmoother(int n) {
        const MatrixXd omega = difference_penalty(n, 2);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(omega);
        eigvec = es.eigenvectors();
        eigval = es.eigenvalues().cwiseMax(0.0);
    }

    VectorXd update(const VectorXd& z, double s, const std::vector<double>& lambda_grid,
                    double* lambda_used = nullptr) const {
        const Eigen::Index n = z.size();
        const VectorXd zt = eigvec.transpose() * (z / s);
        double best_gcv = std::numeric_limits<double>::infinity();
        double best_lambda = lambda_grid.front();
        for (const double lambda : lambda_grid) {
            const double ratio = lambda / s;
            double rss = 0.0, tr = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double shrink = 1.0 / (1.0 + ratio * eigval[i]);
                const double resid = zt[i] * (1.0 - shrink);
                rss += resid * resid;
                tr += shrink;
            }
            const double denom = 1.0 - tr / static_cast<double>(n);
            if (denom <= 0.0) continue;
            const double gcv = (rss / static_cast<double>(n)) / (denom * denom);
            if (gcv < best_gcv) { best_gcv = gcv; best_lambda = lambda; }
        }
        if (lambda_used) *lambda_used = best_lambda;
        const double ratio = best_lambda / s;
        VectorXd ut(n);
        for (Eigen::Index i = 0; i < n; ++i) ut[i] = zt[i] / (1.0 + ratio * eigval[i]);
        return eigvec * ut;
    }
};

inline VectorXd rank_one_vectorize(const VectorXd& u, const VectorXd& v) {
    const int ny = static_cast<int>(u.size()), nx = static_cast<int>(v.size());
    VectorXd c(static_cast<Eigen::Index>(nx) * ny);
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) c[static_cast<Eigen::Index>(iy) * nx + ix] = u[iy] * v[ix];
    return c;
}

} // namespace detail

/// Greedy regularized rank-one decomposition of an image sample: each
/// component is a smooth outer product u (x) v found by alternating penalized
/// regressions (second-difference penalties, GCV-selected lambda within the
/// given bounds), deflating after every component. Accepted components are
/// re-orthonormalized against their predecessors so the returned set is
/// orthonormal and scores equal X * components exactly.
inline EigenimageSet rank_one_eigenimages(const MatrixXd& X, int nx, int ny, int K,
                                          std::pair<double, double> lambda_bounds = {1e-4, 1e2},
                                          int max_iterations = 500, double tolerance = 1e-7) {
    const Eigen::Index N = X.rows(), L = X.cols();
    if (static_cast<Eigen::Index>(nx) * ny != L)
        throw std::invalid_argument("rank_one_eigenimages: nx*ny does not match X columns");
    if (K < 1 || K > std::min<Eigen::Index>(N, std::min(nx, ny)))
        throw std::invalid_argument("rank_one_eigenimages: require 1 <= K <= min(N, nx, ny)");
    const std::vector<double> lambda_grid =
        lambda_bounds.second > lambda_bounds.first
            ? log_spaced_grid(lambda_bounds.first, lambda_bounds.second, 25)
            : std::vector<double>{lambda_bounds.first};

    const detail::MarginalSmoother smooth_y(ny), smooth_x(nx);
    EigenimageSet set;
    set.nx = nx;
    set.ny = ny;
    set.components.resize(L, K);
    set.singular_values.resize(K);

    MatrixXd R = X;
    for (int k = 0; k < K; ++k) {
        // init from the leading singular pair of the residual, reshaped
        VectorXd w = VectorXd::Ones(L) / std::sqrt(static_cast<double>(L));
        for (int it = 0; it < 60; ++it) {
            VectorXd w2 = R.transpose() * (R * w);
            const double n2 = w2.norm();
            if (n2 <= 0.0) break;
            w2 /= n2;
            const double delta = (w2 - w).cwiseAbs().maxCoeff();
            w = w2;
            if (delta < 1e-12) break;
        }
        MatrixXd Wm(ny, nx);
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) Wm(iy, ix) = w[static_cast<Eigen::Index>(iy) * nx + ix];
        Eigen::JacobiSVD<MatrixXd> wsvd(Wm, Eigen::ComputeThinU | Eigen::ComputeThinV);
        VectorXd u = wsvd.matrixU().col(0);
        VectorXd v = wsvd.matrixV().col(0);

        bool converged = false;
        // GCV re-selects the lambdas during the first iterations; they are
        // then frozen so the alternation becomes a plain fixed-point iteration
        // and cannot cycle between grid points.
        const int adapt_until = std::max(1, std::min(50, max_iterations / 2));
        double lambda_u = lambda_grid.front(), lambda_v = lambda_grid.front();
        // plateau detector: with (near-)tied directions the iterate wanders
        // inside the tied subspace while the captured energy has converged;
        // any vector on the plateau is an equally valid component
        double plateau_anchor = -1.0;
        int plateau_age = 0;
        for (int it = 0; it < max_iterations; ++it) {
            const VectorXd u_prev = u, v_prev = v;
            const VectorXd c = detail::rank_one_vectorize(u, v);
            const VectorXd theta = R * c; // c has unit norm
            const double s = theta.squaredNorm();
            if (s <= 0.0) break;
            const VectorXd rtheta = R.transpose() * theta;
            MatrixXd G(ny, nx);
            for (int iy = 0; iy < ny; ++iy)
                for (int ix = 0; ix < nx; ++ix)
                    G(iy, ix) = rtheta[static_cast<Eigen::Index>(iy) * nx + ix];
            const bool adapt = it < adapt_until;
            u = adapt ? smooth_y.update(G * v, s * v.squaredNorm(), lambda_grid, &lambda_u)
                      : smooth_y.update(G * v, s * v.squaredNorm(), {lambda_u});
            if (u.norm() <= 0.0) break;
            u /= u.norm();
            v = adapt ? smooth_x.update(G.transpose() * u, s, lambda_grid, &lambda_v)
                      : smooth_x.update(G.transpose() * u, s, {lambda_v});
            if (v.norm() <= 0.0) break;
            v /= v.norm();
            // fix signs to stop flip oscillation
            Eigen::Index iu, iv;
            u.cwiseAbs().maxCoeff(&iu);
            v.cwiseAbs().maxCoeff(&iv);
            if (u[iu] < 0.0) u = -u;
            if (v[iv] < 0.0) v = -v;
            VectorXd up = u_prev, vp = v_prev;
            Eigen::Index ipu, ipv;
            up.cwiseAbs().maxCoeff(&ipu);
            vp.cwiseAbs().maxCoeff(&ipv);
            if (up[ipu] < 0.0) up = -up;
            if (vp[ipv] < 0.0) vp = -vp;
            const double delta = (u - up).cwiseAbs().maxCoeff() + (v - vp).cwiseAbs().maxCoeff();
            if (delta < tolerance) { converged = true; break; }
            if (it >= adapt_until) {
                if (plateau_anchor >= 0.0 && s <= plateau_anchor * (1.0 + 1e-8)) {
                    if (++plateau_age >= 25) { converged = true; break; }
                } else {
                    plateau_anchor = s;
                    plateau_age = 0;
                }
            }
        }
        if (!converged)
            throw ConvergenceError("rank_one_eigenimages: alternation did not converge for component " +
                                   std::to_string(k + 1));

        VectorXd c = detail::rank_one_vectorize(u, v);
        for (int j = 0; j < k; ++j) c -= set.components.col(j).dot(c) * set.components.col(j);
        const double cn = c.norm();
        if (cn < 1e-10)
            throw RankDeficiencyError("rank_one_eigenimages: component collapsed onto previous span");
        c /= cn;
        Eigen::Index imax;
        c.cwiseAbs().maxCoeff(&imax);
        if (c[imax] < 0.0) c = -c;
        const VectorXd theta = R * c;
        set.components.col(k) = c;
        set.singular_values[k] = theta.norm();
        R -= theta * c.transpose();
    }

    // enforce the descending order the greedy pass almost always produces
    std::vector<int> order(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) order[static_cast<std::size_t>(k)] = k;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return set.singular_values[a] > set.singular_values[b];
    });
    MatrixXd comps(L, K);
    VectorXd svals(K);
    for (int k = 0; k < K; ++k) {
        comps.col(k) = set.components.col(order[static_cast<std::size_t>(k)]);
        svals[k] = set.singular_values[order[static_cast<std::size_t>(k)]];
    }
    set.components = std::move(comps);
    set.singular_values = std::move(svals);
    set.scores = X * set.components;
    return set;
}

} // namespace soir
