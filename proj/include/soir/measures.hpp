#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "soir/errors.hpp"
#include "soir/gibbs.hpp"
#include "soir/image.hpp"
#include "soir/io.hpp"
#include "soir/neighborhood.hpp"
#include "soir/projection.hpp"

namespace soir {

/// All assumption measures live on [0, 1]; 0 means the assumption is met
/// perfectly, 1 means it is not met at all.

namespace detail {

inline double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

inline double digamma(double x) {
    double acc = 0.0;
    while (x < 6.0) { acc -= 1.0 / x; x += 1.0; }
    const double inv = 1.0 / x, inv2 = inv * inv;
    return acc + std::log(x) - 0.5 * inv -
           inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
}

} // namespace detail

/// Rayleigh quotient of the neighbourhood penalty scaled by its largest
/// eigenvalue: beta'P beta / (lambda_max(P) beta'beta).
inline double m_smoothness(const VectorXd& beta, const MatrixXd& P, double lambda_max) {
    if (beta.squaredNorm() <= 0.0) throw DegenerateInputError("m_smoothness: zero image");
    if (!(lambda_max > 0.0)) throw DegenerateInputError("m_smoothness: penalty has no positive eigenvalue");
    const double quad = beta.dot(P * beta);
    return detail::clamp01(quad / (lambda_max * beta.squaredNorm()));
}

inline double m_smoothness(const VectorXd& beta, const MatrixXd& P) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(P, Eigen::EigenvaluesOnly);
    return m_smoothness(beta, P, es.eigenvalues().maxCoeff());
}

inline double m_smoothness(const Image2D& beta, const NeighborhoodMatrix& nb) {
    const double n2 = beta.values().squaredNorm();
    if (n2 <= 0.0) throw DegenerateInputError("m_smoothness: zero image");
    return detail::clamp01(nb.quad_form(beta.values()) / (nb.lambda_max() * n2));
}

/// 1 - Gini(|beta|): 1 for a constant vector, 1/L for a single spike.
inline double m_sparsity(const VectorXd& beta) {
    const Eigen::Index L = beta.size();
    if (L < 1) throw std::invalid_argument("m_sparsity: empty vector");
    std::vector<double> mag(static_cast<std::size_t>(L));
    double l1 = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) { mag[static_cast<std::size_t>(l)] = std::abs(beta[l]); l1 += mag[static_cast<std::size_t>(l)]; }
    if (l1 <= 0.0) throw DegenerateInputError("m_sparsity: zero vector");
    std::sort(mag.begin(), mag.end());
    double gini_sum = 0.0;
    for (Eigen::Index l = 1; l <= L; ++l)
        gini_sum += (mag[static_cast<std::size_t>(l - 1)] / l1) *
                    ((static_cast<double>(L) - l + 0.5) / static_cast<double>(L));
    const double gini = 1.0 - 2.0 * gini_sum;
    return detail::clamp01(1.0 - gini);
}

/// Proportion of non-zero entries.
inline double m_selection(const VectorXd& b) {
    if (b.size() < 1) throw std::invalid_argument("m_selection: empty vector");
    Eigen::Index nz = 0;
    for (Eigen::Index k = 0; k < b.size(); ++k)
        if (b[k] != 0.0) ++nz;
    return static_cast<double>(nz) / static_cast<double>(b.size());
}

/// Selection measure of a posterior-mean Ising field: strictly greater than
/// 0.5 counts as selected, ties at exactly 0.5 do not.
inline double m_selection_ising(const VectorXd& gamma_mean) {
    if (gamma_mean.size() < 1) throw std::invalid_argument("m_selection_ising: empty vector");
    Eigen::Index nz = 0;
    for (Eigen::Index l = 0; l < gamma_mean.size(); ++l)
        if (gamma_mean[l] > 0.5) ++nz;
    return static_cast<double>(nz) / static_cast<double>(gamma_mean.size());
}

/// Residual fraction of beta outside the span of the basis columns.
inline double m_projection(const VectorXd& beta, const MatrixXd& basis_matrix) {
    return project_onto_span(beta, basis_matrix).residual_fraction;
}

inline double m_projection(const Image2D& beta, const MatrixXd& basis_matrix) {
    return m_projection(beta.values(), basis_matrix);
}

/// KL(IG(a1, b1) || IG(a2, b2)), shapes a, scales b.
inline double inverse_gamma_kl(double a1, double b1, double a2, double b2) {
    if (a1 <= 0 || b1 <= 0 || a2 <= 0 || b2 <= 0)
        throw std::invalid_argument("inverse_gamma_kl: parameters must be positive");
    return (a1 - a2) * detail::digamma(a1) - std::lgamma(a1) + std::lgamma(a2) +
           a2 * (std::log(b1) - std::log(b2)) + a1 * (b2 - b1) / b1;
}

inline double m_prior_from_divergence(double D) {
    if (D < 0.0) D = 0.0;
    return detail::clamp01(1.0 - std::exp(-D / 10.0));
}

/// GMRF prior impact: KL from the sigma2_beta prior to its full conditional
/// evaluated at the final saved sweep.
inline double m_prior_gmrf(const MCMCChain& chain, const NeighborhoodMatrix& nb,
                           double prior_shape, double prior_scale) {
    if (chain.saved() < 1) throw std::invalid_argument("m_prior_gmrf: empty chain");
    const VectorXd beta_final = chain.beta.row(chain.saved() - 1).transpose();
    const double a_post = prior_shape + 0.5 * static_cast<double>(nb.size() - 1);
    const double b_post = prior_scale + 0.5 * nb.quad_form(beta_final);
    return m_prior_from_divergence(inverse_gamma_kl(a_post, b_post, prior_shape, prior_scale));
}

/// SparseGMRF prior impact: the CV grid acts as a discrete uniform prior with
/// a point-mass full conditional, so D = log(#combinations).
inline double m_prior_grid(int combinations) {
    if (combinations < 1) throw std::invalid_argument("m_prior_grid: need at least one combination");
    return m_prior_from_divergence(std::log(static_cast<double>(combinations)));
}

// ------------------------------------------------------------- reporting

struct MeasureReport {
    std::optional<double> smoothness_image;
    std::optional<double> smoothness_coeff;
    std::optional<double> sparsity_image;
    std::optional<double> sparsity_wavelet;
    std::optional<double> selection;
    std::optional<double> prior;
    std::map<std::string, double> projection;
};

inline std::string measure_csv_header() {
    return "label,smoothness_image,smoothness_coeff,sparsity_image,sparsity_wavelet,"
           "selection,projection_splines,projection_wavelets,projection_eigenimages,prior";
}

namespace detail {
inline std::string opt_cell(const std::optional<double>& v) {
    return v.has_value() ? format_double(*v) : std::string("NA");
}
} // namespace detail

inline std::string measure_csv_row(const std::string& label, const MeasureReport& r) {
    auto proj = [&](const char* name) -> std::string {
        const auto it = r.projection.find(name);
        return it == r.projection.end() ? "NA" : detail::opt_cell(it->second);
    };
    std::string row = label;
    row += ',' + detail::opt_cell(r.smoothness_image);
    row += ',' + detail::opt_cell(r.smoothness_coeff);
    row += ',' + detail::opt_cell(r.sparsity_image);
    row += ',' + detail::opt_cell(r.sparsity_wavelet);
    row += ',' + detail::opt_cell(r.selection);
    row += ',' + proj("splines");
    row += ',' + proj("wavelets");
    row += ',' + proj("eigenimages");
    row += ',' + detail::opt_cell(r.prior);
    return row;
}

} // namespace soir
