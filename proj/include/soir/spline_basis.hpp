#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <vector>

#include "soir/image.hpp"

namespace soir {

/// Tensor-product B-spline basis evaluated on the pixel grid, with an
/// anisotropic additive difference penalty. Coefficient layout matches the
/// row-major pixel layout: coefficient (kx, ky) sits at index ky * Kx + kx.
struct SplineBasis2D {
    int Kx = 0;
    int Ky = 0;
    int degree = 3;
    int penalty_order = 2;
    VectorXd knots_x;
    VectorXd knots_y;
    MatrixXd B;       ///< L x (Kx*Ky) evaluation matrix, rows sum to 1
    MatrixXd penalty; ///< (Kx*Ky)^2 matrix D'D (x) I + I (x) D'D
};

namespace detail {

/// Uniform knot vector for K cubic B-splines covering [0,1]: K - degree
/// interior intervals padded by `degree` knots on each side.
inline VectorXd uniform_knots(int K, int degree) {
    const int intervals = K - degree;
    if (intervals < 1)
        throw std::invalid_argument("spline basis: need K >= degree + 1 basis functions");
    const double h = 1.0 / intervals;
    VectorXd knots(K + degree + 1);
    for (int j = 0; j < knots.size(); ++j) knots[j] = (j - degree) * h;
    return knots;
}

/// Cox-de Boor evaluation of all B-splines at point t. Writes the K basis
/// values into `row`.
inline void eval_bspline_row(const VectorXd& knots, int K, int degree, double t,
                             VectorXd& row) {
    row.setZero();
    // locate the knot span [knots[s], knots[s+1]) containing t
    int s = degree;
    while (s < K - 1 && t >= knots[s + 1]) ++s;
    // iterative de Boor triangle: values of degree-d splines ending at span s
    std::vector<double> N(static_cast<std::size_t>(degree) + 1, 0.0);
    N[0] = 1.0;
    for (int d = 1; d <= degree; ++d) {
        double saved = 0.0;
        for (int r = 0; r < d; ++r) {
            const int i = s - d + 1 + r;
            const double left = knots[i + d] - knots[i];
            const double term = left > 0.0 ? N[static_cast<std::size_t>(r)] / left : 0.0;
            N[static_cast<std::size_t>(r)] = saved + (knots[i + d] - t) * term;
            saved = (t - knots[i]) * term;
        }
        N[static_cast<std::size_t>(d)] = saved;
    }
    for (int r = 0; r <= degree; ++r) {
        const int k = s - degree + r;
        if (k >= 0 && k < K) row[k] = N[static_cast<std::size_t>(r)];
    }
}

/// K x K marginal difference penalty D'D of the given order.
inline MatrixXd difference_penalty(int K, int order) {
    MatrixXd D = MatrixXd::Identity(K, K);
    for (int o = 0; o < order; ++o) {
        const Eigen::Index rows = D.rows() - 1;
        MatrixXd Dn(rows, K);
        Dn = D.bottomRows(rows) - D.topRows(rows);
        D = Dn;
    }
    return D.transpose() * D;
}

inline MatrixXd marginal_basis(int n, int K, int degree) {
    if (n < K)
        throw std::invalid_argument("spline basis: grid smaller than basis support");
    const VectorXd knots = uniform_knots(K, degree);
    MatrixXd B(n, K);
    VectorXd row(K);
    for (int i = 0; i < n; ++i) {
        const double t = (i + 0.5) / n; // pixel centers on [0,1]
        eval_bspline_row(knots, K, degree, t, row);
        B.row(i) = row.transpose();
    }
    return B;
}

} // namespace detail

inline SplineBasis2D eval_spline_basis(int nx, int ny, int Kx, int Ky, int penalty_order = 2) {
    if (penalty_order < 1) throw std::invalid_argument("spline basis: penalty order must be >= 1");
    if (Kx < penalty_order + 1 || Ky < penalty_order + 1)
        throw std::invalid_argument("spline basis: need K >= penalty_order + 1");
    SplineBasis2D basis;
    basis.Kx = Kx;
    basis.Ky = Ky;
    basis.penalty_order = penalty_order;
    basis.knots_x = detail::uniform_knots(Kx, basis.degree);
    basis.knots_y = detail::uniform_knots(Ky, basis.degree);

    const MatrixXd Bx = detail::marginal_basis(nx, Kx, basis.degree);
    const MatrixXd By = detail::marginal_basis(ny, Ky, basis.degree);

    const Eigen::Index L = static_cast<Eigen::Index>(nx) * ny;
    const Eigen::Index K = static_cast<Eigen::Index>(Kx) * Ky;
    basis.B.resize(L, K);
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix)
            for (int ky = 0; ky < Ky; ++ky)
                for (int kx = 0; kx < Kx; ++kx)
                    basis.B(static_cast<Eigen::Index>(iy) * nx + ix,
                            static_cast<Eigen::Index>(ky) * Kx + kx) = Bx(ix, kx) * By(iy, ky);

    const MatrixXd Px = detail::difference_penalty(Kx, penalty_order);
    const MatrixXd Py = detail::difference_penalty(Ky, penalty_order);
    basis.penalty = MatrixXd::Zero(K, K);
    // I_Ky (x) Px  +  Py (x) I_Kx under index k = ky * Kx + kx
    for (int ky = 0; ky < Ky; ++ky)
        for (int kx1 = 0; kx1 < Kx; ++kx1)
            for (int kx2 = 0; kx2 < Kx; ++kx2)
                basis.penalty(static_cast<Eigen::Index>(ky) * Kx + kx1,
                              static_cast<Eigen::Index>(ky) * Kx + kx2) += Px(kx1, kx2);
    for (int kx = 0; kx < Kx; ++kx)
        for (int ky1 = 0; ky1 < Ky; ++ky1)
            for (int ky2 = 0; ky2 < Ky; ++ky2)
                basis.penalty(static_cast<Eigen::Index>(ky1) * Kx + kx,
                              static_cast<Eigen::Index>(ky2) * Kx + kx) += Py(ky1, ky2);
    return basis;
}

} // namespace soir
