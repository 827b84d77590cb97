#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "soir/errors.hpp"
#include "soir/estimators.hpp"
#include "soir/fit.hpp"
#include "soir/gibbs.hpp"
#include "soir/image.hpp"

namespace soir {

enum class BandKind { Wald, BootstrapPercentile, Credible };

/// Pointwise uncertainty band for beta (images) and alpha (vectors).
struct Band {
    Image2D lower;
    Image2D upper;
    VectorXd alpha_lower;
    VectorXd alpha_upper;
    double level = 0.95;
    BandKind kind = BandKind::Wald;
    int bootstrap_failures = 0;
};

/// Type-7 quantile (linear interpolation of order statistics) of sorted data.
inline double quantile_type7(const std::vector<double>& sorted, double p) {
    const std::size_t n = sorted.size();
    if (n == 0) throw std::invalid_argument("quantile_type7: empty sample");
    if (n == 1) return sorted[0];
    const double h = (static_cast<double>(n) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = h - std::floor(h);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double normal_quantile(double p) {
    // Acklam's rational approximation refined by one Newton step; accurate to
    // ~1e-12 on (0, 1), more than enough for band construction.
    if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("normal_quantile: p must be in (0, 1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01, -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    double x;
    if (p < 0.02425) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 0.97575) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

/// Wald band from the Gaussian coefficient posterior of a penalized fit:
/// beta_l -+ z * se(beta_l) with se from the mapped coefficient covariance.
inline Band wald_band(const FitResult& fit, double level = 0.95) {
    if (!fit.coef_posterior)
        throw std::invalid_argument("wald_band: fit carries no coefficient covariance");
    const CoefficientPosterior& post = *fit.coef_posterior;
    const Eigen::Index p = post.p;
    const Eigen::Index K = post.covariance.rows() - p;
    if (post.pixel_map.cols() != K)
        throw std::invalid_argument("wald_band: pixel map does not match covariance");
    const double z = normal_quantile(0.5 + level / 2.0);

    const MatrixXd cov_bb = post.covariance.bottomRightCorner(K, K);
    const MatrixXd half = post.pixel_map * cov_bb.selfadjointView<Eigen::Lower>();
    VectorXd se(post.pixel_map.rows());
    for (Eigen::Index l = 0; l < se.size(); ++l)
        se[l] = std::sqrt(std::max(half.row(l).dot(post.pixel_map.row(l)), 0.0));

    Band band;
    band.kind = BandKind::Wald;
    band.level = level;
    band.lower = Image2D(fit.beta.nx(), fit.beta.ny(), fit.beta.values() - z * se);
    band.upper = Image2D(fit.beta.nx(), fit.beta.ny(), fit.beta.values() + z * se);
    band.alpha_lower.resize(p);
    band.alpha_upper.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double sa = std::sqrt(std::max(post.covariance(j, j), 0.0));
        band.alpha_lower[j] = fit.alpha[j] - z * sa;
        band.alpha_upper[j] = fit.alpha[j] + z * sa;
    }
    return band;
}

// ------------------------------------------------- fixed-parameter refits

/// Refit a dimension-reduction method with the hyperparameters frozen to the
/// values recorded in `original`; used by the bootstrap.
inline FitResult refit_fixed(const RegressionDataset& data, const FitResult& original) {
    const auto hp = [&](const char* key) {
        const auto it = original.hyperparameters.find(key);
        if (it == original.hyperparameters.end())
            throw std::invalid_argument(std::string("refit_fixed: missing hyperparameter ") + key);
        return it->second;
    };
    switch (original.method) {
        case Method::PCR2D: {
            Pcr2dConfig cfg;
            const int K = static_cast<int>(hp("K"));
            cfg.n_components = K;
            cfg.K_grid = {K};
            return fit_pcr2d(data, cfg);
        }
        case Method::WCR:
        case Method::WPLS: {
            WcrConfig cfg;
            cfg.screen.Kstar_grid = {static_cast<int>(hp("K_star"))};
            cfg.K0_grid = {static_cast<int>(hp("K0"))};
            return original.method == Method::WCR ? fit_wcr(data, cfg) : fit_wpls(data, cfg);
        }
        case Method::WNET: {
            WnetConfig cfg;
            cfg.screen.Kstar_grid = {static_cast<int>(hp("K_star"))};
            cfg.eta_grid = {hp("eta")};
            cfg.lambda_path = {hp("lambda")};
            return fit_wnet(data, cfg);
        }
        default:
            throw std::invalid_argument("refit_fixed: method not supported for bootstrap");
    }
}

/// Nonparametric bootstrap percentile band: rows resampled with replacement,
/// refits with frozen hyperparameters, type-7 pointwise percentiles.
/// Individual refit failures are tolerated up to 10% of B.
inline Band bootstrap_band(const RegressionDataset& data, const FitResult& original, int B = 200,
                           std::uint64_t seed = 0, double level = 0.95) {
    if (B < 2) throw std::invalid_argument("bootstrap_band: need B >= 2");
    const Eigen::Index N = data.n(), L = data.l(), p = data.p();
    Rng master(seed);
    std::vector<VectorXd> beta_draws;
    std::vector<VectorXd> alpha_draws;
    beta_draws.reserve(static_cast<std::size_t>(B));
    int failures = 0;
    for (int rep = 0; rep < B; ++rep) {
        Rng rng = master.split(static_cast<std::uint64_t>(rep) + 1);
        RegressionDataset boot = data;
        for (Eigen::Index i = 0; i < N; ++i) {
            const int pick = rng.uniform_int(static_cast<int>(N));
            boot.y[i] = data.y[pick];
            boot.W.row(i) = data.W.row(pick);
            boot.X.row(i) = data.X.row(pick);
        }
        try {
            const FitResult fit = refit_fixed(boot, original);
            beta_draws.push_back(fit.beta.values());
            alpha_draws.push_back(fit.alpha);
        } catch (const std::exception&) {
            ++failures;
        }
    }
    if (failures > B / 10)
        throw ConvergenceError("bootstrap_band: more than 10% of resample refits failed");
    if (beta_draws.size() < 2)
        throw ConvergenceError("bootstrap_band: not enough successful refits");

    const double plo = (1.0 - level) / 2.0, phi = 1.0 - plo;
    VectorXd lower(L), upper(L);
    std::vector<double> col(beta_draws.size());
    for (Eigen::Index l = 0; l < L; ++l) {
        for (std::size_t i = 0; i < beta_draws.size(); ++i) col[i] = beta_draws[i][l];
        std::sort(col.begin(), col.end());
        lower[l] = quantile_type7(col, plo);
        upper[l] = quantile_type7(col, phi);
    }
    Band band;
    band.kind = BandKind::BootstrapPercentile;
    band.level = level;
    band.bootstrap_failures = failures;
    band.lower = Image2D(data.nx, data.ny, lower);
    band.upper = Image2D(data.nx, data.ny, upper);
    band.alpha_lower.resize(p);
    band.alpha_upper.resize(p);
    std::vector<double> acol(alpha_draws.size());
    for (Eigen::Index j = 0; j < p; ++j) {
        for (std::size_t i = 0; i < alpha_draws.size(); ++i) acol[i] = alpha_draws[i][j];
        std::sort(acol.begin(), acol.end());
        band.alpha_lower[j] = quantile_type7(acol, plo);
        band.alpha_upper[j] = quantile_type7(acol, phi);
    }
    return band;
}

/// Pointwise credible band from saved MCMC draws (type-7 empirical quantiles).
inline Band credible_band(const MCMCChain& chain, int nx, int ny, double level = 0.95) {
    if (chain.saved() < 40)
        throw std::invalid_argument("credible_band: need at least 40 saved steps");
    const Eigen::Index L = chain.beta.cols(), p = chain.alpha.cols();
    if (static_cast<Eigen::Index>(nx) * ny != L)
        throw std::invalid_argument("credible_band: grid does not match chain");
    const double plo = (1.0 - level) / 2.0, phi = 1.0 - plo;
    VectorXd lower(L), upper(L);
    std::vector<double> col(static_cast<std::size_t>(chain.saved()));
    for (Eigen::Index l = 0; l < L; ++l) {
        for (Eigen::Index i = 0; i < chain.saved(); ++i) col[static_cast<std::size_t>(i)] = chain.beta(i, l);
        std::sort(col.begin(), col.end());
        lower[l] = quantile_type7(col, plo);
        upper[l] = quantile_type7(col, phi);
    }
    Band band;
    band.kind = BandKind::Credible;
    band.level = level;
    band.lower = Image2D(nx, ny, lower);
    band.upper = Image2D(nx, ny, upper);
    band.alpha_lower.resize(p);
    band.alpha_upper.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index i = 0; i < chain.saved(); ++i) col[static_cast<std::size_t>(i)] = chain.alpha(i, j);
        std::sort(col.begin(), col.end());
        band.alpha_lower[j] = quantile_type7(col, plo);
        band.alpha_upper[j] = quantile_type7(col, phi);
    }
    return band;
}

/// 1 where the closed interval [lower, upper] excludes zero, else 0.
inline Image2D flag_significant(const Band& band) {
    Image2D flags = Image2D::zero(band.lower.nx(), band.lower.ny());
    for (Eigen::Index l = 0; l < flags.size(); ++l) {
        const bool contains_zero = band.lower.values()[l] <= 0.0 && band.upper.values()[l] >= 0.0;
        flags.values()[l] = contains_zero ? 0.0 : 1.0;
    }
    return flags;
}

} // namespace soir
