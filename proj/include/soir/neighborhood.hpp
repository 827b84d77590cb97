#pragma once

#include <Eigen/Core>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "soir/image.hpp"

namespace soir {

/// Graph Laplacian of the 4-neighbour pixel grid: diagonal entries are the
/// neighbour counts d_l, off-diagonal entries -1 for adjacent pixels.
/// Row sums are zero, the matrix is PSD with rank L-1 on a connected grid.
/// Stored implicitly; the grid structure makes all operations O(L).
class NeighborhoodMatrix {
public:
    NeighborhoodMatrix(int nx, int ny) : nx_(nx), ny_(ny) {
        if (nx_ < 2 || ny_ < 2)
            throw std::invalid_argument("NeighborhoodMatrix: nx and ny must both be >= 2");
    }

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    Eigen::Index size() const { return static_cast<Eigen::Index>(nx_) * ny_; }

    int degree(Eigen::Index l) const {
        const int ix = static_cast<int>(l % nx_);
        const int iy = static_cast<int>(l / nx_);
        int d = 0;
        if (ix > 0) ++d;
        if (ix < nx_ - 1) ++d;
        if (iy > 0) ++d;
        if (iy < ny_ - 1) ++d;
        return d;
    }

    template <typename Fn>
    void for_each_neighbor(Eigen::Index l, Fn&& fn) const {
        const int ix = static_cast<int>(l % nx_);
        const int iy = static_cast<int>(l / nx_);
        if (ix > 0) fn(l - 1);
        if (ix < nx_ - 1) fn(l + 1);
        if (iy > 0) fn(l - nx_);
        if (iy < ny_ - 1) fn(l + nx_);
    }

    /// beta' P beta = sum over unordered neighbour pairs of (beta_i - beta_j)^2.
    double quad_form(const VectorXd& beta) const {
        check(beta);
        double s = 0.0;
        for (int iy = 0; iy < ny_; ++iy) {
            for (int ix = 0; ix < nx_; ++ix) {
                const Eigen::Index l = static_cast<Eigen::Index>(iy) * nx_ + ix;
                if (ix < nx_ - 1) { const double d = beta[l] - beta[l + 1]; s += d * d; }
                if (iy < ny_ - 1) { const double d = beta[l] - beta[l + nx_]; s += d * d; }
            }
        }
        return s;
    }

    VectorXd multiply(const VectorXd& beta) const {
        check(beta);
        VectorXd out(beta.size());
        for (Eigen::Index l = 0; l < beta.size(); ++l) {
            double acc = degree(l) * beta[l];
            for_each_neighbor(l, [&](Eigen::Index j) { acc -= beta[j]; });
            out[l] = acc;
        }
        return out;
    }

    /// Largest eigenvalue. The grid Laplacian is the Kronecker sum of two
    /// path-graph Laplacians, whose spectra are 4 sin^2(pi k / (2n)).
    double lambda_max() const {
        return path_lambda_max(nx_) + path_lambda_max(ny_);
    }

    Eigen::Index rank() const { return size() - 1; }

    MatrixXd dense() const {
        MatrixXd P = MatrixXd::Zero(size(), size());
        for (Eigen::Index l = 0; l < size(); ++l) {
            P(l, l) = degree(l);
            for_each_neighbor(l, [&](Eigen::Index j) { P(l, j) = -1.0; });
        }
        return P;
    }

private:
    static double path_lambda_max(int n) {
        const double s = std::sin(std::numbers::pi * (n - 1) / (2.0 * n));
        return 4.0 * s * s;
    }

    void check(const VectorXd& beta) const {
        if (beta.size() != size())
            throw std::invalid_argument("NeighborhoodMatrix: vector length does not match grid");
    }

    int nx_;
    int ny_;
};

inline NeighborhoodMatrix build_neighborhood(int nx, int ny) { return NeighborhoodMatrix(nx, ny); }

} // namespace soir
