#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <utility>

#include "soir/errors.hpp"
#include "soir/image.hpp"

namespace soir {

struct ProjectionResult {
    VectorXd projection;
    double residual_fraction = 0.0;
};

/// Orthogonal projection of beta onto the column span of basis_matrix,
/// together with the fraction of squared norm left in the complement.
/// Columns are orthonormalized by Householder QR; columns that fall below
/// the 1e-10 rank tolerance are dropped (they do not change the span).
inline ProjectionResult project_onto_span(const VectorXd& beta, const MatrixXd& basis_matrix) {
    if (basis_matrix.rows() != beta.size())
        throw std::invalid_argument("project_onto_span: dimension mismatch");
    const double beta_norm2 = beta.squaredNorm();
    if (beta_norm2 <= 0.0)
        throw DegenerateInputError("project_onto_span: zero image");

    Eigen::ColPivHouseholderQR<MatrixXd> qr(basis_matrix);
    qr.setThreshold(1e-10);
    const Eigen::Index rank = qr.rank();
    if (rank == 0) throw RankDeficiencyError("project_onto_span: basis has rank zero");

    MatrixXd Q = qr.householderQ() * MatrixXd::Identity(basis_matrix.rows(), rank);
    VectorXd proj = Q * (Q.transpose() * beta);
    double resid = (beta - proj).squaredNorm() / beta_norm2;
    if (resid < 0.0) resid = 0.0;
    if (resid > 1.0) resid = 1.0;
    return ProjectionResult{std::move(proj), resid};
}

inline std::pair<Image2D, double> project_onto_span(const Image2D& beta, const MatrixXd& basis_matrix) {
    ProjectionResult r = project_onto_span(beta.values(), basis_matrix);
    return {Image2D(beta.nx(), beta.ny(), std::move(r.projection)), r.residual_fraction};
}

} // namespace soir
