#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "soir/errors.hpp"
#include "soir/fit.hpp"
#include "soir/image.hpp"
#include "soir/neighborhood.hpp"
#include "soir/rng.hpp"

namespace soir {

/// Intrinsic GMRF sampler settings. The default inverse-gamma priors are the
/// uninformative (1, 1) pair; gmrf2_config() switches to the highly
/// informative (10, 1e-3) pair.
struct GMRFConfig {
    double prior_shape_eps = 1.0;
    double prior_scale_eps = 1.0;
    double prior_shape_beta = 1.0;
    double prior_scale_beta = 1.0;
    int iterations = 5000;
    int burnin = 500;
    int thin = 20;
    std::uint64_t seed = 1;
    bool clamp_variances = false; ///< freeze both variances (diagnostics/oracles)
    double sigma2_eps_fixed = 1.0;
    double sigma2_beta_fixed = 1.0;

    void validate() const {
        if (iterations <= burnin) throw std::invalid_argument("GMRFConfig: iterations must exceed burnin");
        if (thin < 1) throw std::invalid_argument("GMRFConfig: thin must be >= 1");
    }
};

inline GMRFConfig gmrf2_config() {
    GMRFConfig cfg;
    cfg.prior_shape_eps = 10.0;
    cfg.prior_scale_eps = 1e-3;
    cfg.prior_shape_beta = 10.0;
    cfg.prior_scale_beta = 1e-3;
    return cfg;
}

struct SparseGMRFConfig {
    std::vector<double> a_grid = {-4.0, -2.0, -0.5};
    std::vector<double> b_grid = {0.1, 0.5, 1.5};
    std::vector<double> sigma2_eps_grid = {1e-5, 1e-3, 1e-1};
    std::vector<double> sigma2_beta_grid = {1e-5, 1e-3, 1e-1};
    int cv_iterations = 250;
    int cv_burnin = 100;
    int folds = 5;
    int final_iterations = 5000;
    int final_burnin = 500;
    int final_thin = 20;
    std::uint64_t seed = 1;
};

struct MCMCChain {
    MatrixXd beta;        ///< saved x L
    MatrixXd alpha;       ///< saved x p
    VectorXd sigma2_eps;  ///< saved
    VectorXd sigma2_beta; ///< saved
    MatrixXd gamma;       ///< saved x L, SparseGMRF only (otherwise 0 x 0)

    Eigen::Index saved() const { return beta.rows(); }

    VectorXd beta_mean() const { return beta.colwise().mean(); }

    VectorXd beta_median() const {
        VectorXd med(beta.cols());
        std::vector<double> col(static_cast<std::size_t>(beta.rows()));
        for (Eigen::Index j = 0; j < beta.cols(); ++j) {
            for (Eigen::Index i = 0; i < beta.rows(); ++i) col[static_cast<std::size_t>(i)] = beta(i, j);
            std::sort(col.begin(), col.end());
            const std::size_t n = col.size();
            med[j] = n % 2 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
        }
        return med;
    }
};

struct GMRFResult {
    FitResult fit;
    MCMCChain chain;
};

struct SparseGMRFResult {
    FitResult fit;
    MCMCChain chain;
    int cv_chains_executed = 0;
    bool gamma_collapsed = false; ///< every saved gamma draw was all-zero
};

namespace detail {

struct GibbsWorkspace {
    VectorXd col_norm2;      ///< s_l = x_l' x_l
    Eigen::LLT<MatrixXd> WtW_llt;
    MatrixXd Wt;

    GibbsWorkspace(const MatrixXd& W, const MatrixXd& X) {
        col_norm2.resize(X.cols());
        for (Eigen::Index l = 0; l < X.cols(); ++l) col_norm2[l] = X.col(l).squaredNorm();
        const MatrixXd WtWm = W.transpose() * W;
        WtW_llt.compute(WtWm);
        if (WtW_llt.info() != Eigen::Success ||
            WtW_llt.matrixLLT().diagonal().minCoeff() <= 1e-12 * WtWm.diagonal().maxCoeff())
            throw RankDeficiencyError("gibbs sampler: W'W is singular");
        Wt = W.transpose();
    }

    /// alpha | rest ~ N((W'W)^{-1} W'(y - X beta), sigma2_eps (W'W)^{-1})
    VectorXd draw_alpha(const VectorXd& y_minus_xbeta, double sigma2_eps, Rng& rng) const {
        const VectorXd mu = WtW_llt.solve(Wt * y_minus_xbeta);
        VectorXd z(mu.size());
        for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
        // covariance factor: sigma_eps * L^{-T}
        const VectorXd t = WtW_llt.matrixU().solve(z);
        return mu + std::sqrt(sigma2_eps) * t;
    }
};

inline std::vector<Eigen::Index> random_permutation(Eigen::Index L, Rng& rng) {
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(L));
    for (Eigen::Index l = 0; l < L; ++l) perm[static_cast<std::size_t>(l)] = l;
    rng.shuffle(perm);
    return perm;
}

} // namespace detail

/// Single-site Gibbs sampler for the intrinsic GMRF model. Each sweep draws
/// alpha, the two variances (conjugate inverse gamma, unless clamped) and
/// every beta pixel in freshly randomized order.
inline GMRFResult gibbs_gmrf(const RegressionDataset& data, const GMRFConfig& cfg,
                             Method label = Method::GMRF) {
    cfg.validate();
    if (!data.demeaned) throw std::invalid_argument("gibbs_gmrf: dataset must be demeaned first");
    detail::FitTimer timer;
    const Eigen::Index N = data.n(), L = data.l(), p = data.p();
    const NeighborhoodMatrix nb(data.nx, data.ny);
    detail::GibbsWorkspace ws(data.W, data.X);
    Rng rng(cfg.seed);

    double sigma2_eps = cfg.clamp_variances ? cfg.sigma2_eps_fixed
                                            : cfg.prior_scale_eps / (cfg.prior_shape_eps + 1.0);
    double sigma2_beta = cfg.clamp_variances ? cfg.sigma2_beta_fixed
                                             : cfg.prior_scale_beta / (cfg.prior_shape_beta + 1.0);

    VectorXd beta(L);
    for (Eigen::Index l = 0; l < L; ++l) beta[l] = rng.normal(0.0, std::sqrt(sigma2_beta));
    VectorXd alpha = ws.WtW_llt.solve(ws.Wt * data.y);
    VectorXd r = data.y - data.W * alpha - data.X * beta;

    const Eigen::Index n_saved = (cfg.iterations - cfg.burnin) / cfg.thin;
    MCMCChain chain;
    chain.beta.resize(n_saved, L);
    chain.alpha.resize(n_saved, p);
    chain.sigma2_eps.resize(n_saved);
    chain.sigma2_beta.resize(n_saved);
    Eigen::Index save_at = 0;

    for (int t = 1; t <= cfg.iterations; ++t) {
        const VectorXd y_minus_xbeta = r + data.W * alpha;
        alpha = ws.draw_alpha(y_minus_xbeta, sigma2_eps, rng);
        r = y_minus_xbeta - data.W * alpha;

        if (!cfg.clamp_variances) {
            sigma2_eps = rng.inverse_gamma(cfg.prior_shape_eps + 0.5 * static_cast<double>(N),
                                           cfg.prior_scale_eps + 0.5 * r.squaredNorm());
            sigma2_beta = rng.inverse_gamma(
                cfg.prior_shape_beta + 0.5 * static_cast<double>(L - 1),
                cfg.prior_scale_beta + 0.5 * nb.quad_form(beta));
        }

        const std::vector<Eigen::Index> perm = detail::random_permutation(L, rng);
        for (const Eigen::Index l : perm) {
            const double s_l = ws.col_norm2[l];
            const double c_l = data.X.col(l).dot(r) + s_l * beta[l];
            double nsum = 0.0;
            nb.for_each_neighbor(l, [&](Eigen::Index j) { nsum += beta[j]; });
            const double d_l = nb.degree(l);
            const double prec = s_l / sigma2_eps + d_l / sigma2_beta;
            const double mean = (c_l / sigma2_eps + nsum / sigma2_beta) / prec;
            const double bnew = mean + rng.normal() / std::sqrt(prec);
            const double delta = bnew - beta[l];
            if (delta != 0.0) {
                r -= delta * data.X.col(l);
                beta[l] = bnew;
            }
        }

        if (t > cfg.burnin && (t - cfg.burnin) % cfg.thin == 0 && save_at < n_saved) {
            chain.beta.row(save_at) = beta.transpose();
            chain.alpha.row(save_at) = alpha.transpose();
            chain.sigma2_eps[save_at] = sigma2_eps;
            chain.sigma2_beta[save_at] = sigma2_beta;
            ++save_at;
        }
    }

    GMRFResult out;
    out.chain = std::move(chain);
    out.fit.method = label;
    out.fit.alpha = out.chain.alpha.colwise().mean();
    out.fit.beta = Image2D(data.nx, data.ny, out.chain.beta_mean());
    out.fit.sigma2 = out.chain.sigma2_eps.mean();
    out.fit.runtime_seconds = timer.seconds();
    return out;
}

namespace detail {

struct SparseChainSummary {
    VectorXd beta_mean;
    VectorXd alpha_mean;
    VectorXd gamma_mean;
    bool all_zero = true;
};

/// Core sparse sampler: latent Ising field gamma with joint (gamma_l, beta_l)
/// single-site updates; variances are fixed hyperparameters. When `chain` is
/// non-null every post-burnin `thin`-th state is recorded.
inline SparseChainSummary run_sparse_chain(const MatrixXd& W, const MatrixXd& X, const VectorXd& y,
                                           const NeighborhoodMatrix& nb, double ising_a, double ising_b,
                                           double sigma2_eps, double sigma2_beta, int iterations,
                                           int burnin, int thin, Rng rng, MCMCChain* chain) {
    const Eigen::Index N = y.size(), L = X.cols(), p = W.cols();
    GibbsWorkspace ws(W, X);
    (void)N;

    VectorXd beta = VectorXd::Zero(L);
    VectorXd gamma(L);
    for (Eigen::Index l = 0; l < L; ++l) {
        gamma[l] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        if (gamma[l] > 0.5) beta[l] = rng.normal(0.0, std::sqrt(sigma2_beta));
    }
    VectorXd alpha = ws.WtW_llt.solve(ws.Wt * y);
    VectorXd r = y - W * alpha - X * beta;

    const Eigen::Index n_saved = (iterations - burnin) / thin;
    if (chain) {
        chain->beta.resize(n_saved, L);
        chain->alpha.resize(n_saved, p);
        chain->sigma2_eps = VectorXd::Constant(n_saved, sigma2_eps);
        chain->sigma2_beta = VectorXd::Constant(n_saved, sigma2_beta);
        chain->gamma.resize(n_saved, L);
    }

    SparseChainSummary sum;
    sum.beta_mean = VectorXd::Zero(L);
    sum.alpha_mean = VectorXd::Zero(p);
    sum.gamma_mean = VectorXd::Zero(L);
    Eigen::Index n_accum = 0, save_at = 0;

    for (int t = 1; t <= iterations; ++t) {
        const VectorXd y_minus_xbeta = r + W * alpha;
        alpha = ws.draw_alpha(y_minus_xbeta, sigma2_eps, rng);
        r = y_minus_xbeta - W * alpha;

        const std::vector<Eigen::Index> perm = random_permutation(L, rng);
        for (const Eigen::Index l : perm) {
            const double s_l = ws.col_norm2[l];
            const double c_l = X.col(l).dot(r) + s_l * beta[l];
            int d_sel = 0;
            double nsum = 0.0;
            int d_l = 0;
            nb.for_each_neighbor(l, [&](Eigen::Index j) {
                ++d_l;
                if (gamma[j] > 0.5) { ++d_sel; nsum += beta[j]; }
            });
            const double m = d_sel > 0 ? nsum / d_sel : 0.0;
            const double v = d_sel > 0 ? sigma2_beta / d_sel : sigma2_beta;
            const double tau = s_l / sigma2_eps + 1.0 / v;
            const double mu = (c_l / sigma2_eps + m / v) / tau;
            // beta_l integrated out of likelihood x GMRF factor
            const double log_marginal = 0.5 * std::log(1.0 / (v * tau)) + 0.5 * mu * mu * tau -
                                        0.5 * m * m / v;
            const double log_prior_odds = ising_a + ising_b * (2.0 * d_sel - d_l);
            const double lo = log_prior_odds + log_marginal;
            const double prob = lo > 0.0 ? 1.0 / (1.0 + std::exp(-lo)) : std::exp(lo) / (1.0 + std::exp(lo));
            const bool select = rng.uniform() < prob;
            const double bnew = select ? mu + rng.normal() / std::sqrt(tau) : 0.0;
            gamma[l] = select ? 1.0 : 0.0;
            const double delta = bnew - beta[l];
            if (delta != 0.0) {
                r -= delta * X.col(l);
                beta[l] = bnew;
            }
        }

        if (t > burnin && (t - burnin) % thin == 0) {
            sum.beta_mean += beta;
            sum.alpha_mean += alpha;
            sum.gamma_mean += gamma;
            if (gamma.maxCoeff() > 0.5) sum.all_zero = false;
            if (chain && save_at < n_saved) {
                chain->beta.row(save_at) = beta.transpose();
                chain->alpha.row(save_at) = alpha.transpose();
                chain->gamma.row(save_at) = gamma.transpose();
                ++save_at;
            }
            ++n_accum;
        }
    }
    if (n_accum > 0) {
        sum.beta_mean /= static_cast<double>(n_accum);
        sum.alpha_mean /= static_cast<double>(n_accum);
        sum.gamma_mean /= static_cast<double>(n_accum);
    }
    return sum;
}

} // namespace detail

/// SparseGMRF: hyperparameters (a, b, sigma2_eps, sigma2_beta) selected by
/// K-fold cross-validation with short chains, then one long run. The count of
/// executed CV chains is reported for accounting.
inline SparseGMRFResult gibbs_sparse_gmrf(const RegressionDataset& data, const SparseGMRFConfig& cfg) {
    if (!data.demeaned) throw std::invalid_argument("gibbs_sparse_gmrf: dataset must be demeaned first");
    if (cfg.cv_iterations <= cfg.cv_burnin)
        throw std::invalid_argument("gibbs_sparse_gmrf: cv_iterations must exceed cv_burnin");
    if (cfg.final_iterations <= cfg.final_burnin || cfg.final_thin < 1)
        throw std::invalid_argument("gibbs_sparse_gmrf: bad final run settings");
    detail::FitTimer timer;
    const NeighborhoodMatrix nb(data.nx, data.ny);
    const std::vector<int> fold = cv_fold_assignment(data.n(), cfg.folds, cfg.seed);
    Rng master(cfg.seed);

    SparseGMRFResult out;
    double best_loss = std::numeric_limits<double>::infinity();
    double best_a = cfg.a_grid.front(), best_b = cfg.b_grid.front();
    double best_s2e = cfg.sigma2_eps_grid.front(), best_s2b = cfg.sigma2_beta_grid.front();

    std::uint64_t stream = 0;
    for (const double a : cfg.a_grid) {
        for (const double b : cfg.b_grid) {
            for (const double s2e : cfg.sigma2_eps_grid) {
                for (const double s2b : cfg.sigma2_beta_grid) {
                    double sse = 0.0;
                    Eigen::Index n_held = 0;
                    for (int f = 0; f < cfg.folds; ++f) {
                        const MatrixXd W_tr = detail::select_rows(data.W, fold, f, false);
                        const MatrixXd X_tr = detail::select_rows(data.X, fold, f, false);
                        const VectorXd y_tr = detail::select_rows(data.y, fold, f, false);
                        detail::SparseChainSummary s = detail::run_sparse_chain(
                            W_tr, X_tr, y_tr, nb, a, b, s2e, s2b, cfg.cv_iterations, cfg.cv_burnin, 1,
                            master.split(++stream), nullptr);
                        ++out.cv_chains_executed;
                        const MatrixXd W_ho = detail::select_rows(data.W, fold, f, true);
                        const MatrixXd X_ho = detail::select_rows(data.X, fold, f, true);
                        const VectorXd y_ho = detail::select_rows(data.y, fold, f, true);
                        sse += (y_ho - W_ho * s.alpha_mean - X_ho * s.beta_mean).squaredNorm();
                        n_held += y_ho.size();
                    }
                    const double loss = sse / static_cast<double>(n_held);
                    if (best_loss == std::numeric_limits<double>::infinity() ||
                        loss < best_loss - 1e-12 * (1.0 + std::abs(best_loss))) {
                        best_loss = loss;
                        best_a = a;
                        best_b = b;
                        best_s2e = s2e;
                        best_s2b = s2b;
                    }
                }
            }
        }
    }

    MCMCChain chain;
    detail::SparseChainSummary s = detail::run_sparse_chain(
        data.W, data.X, data.y, nb, best_a, best_b, best_s2e, best_s2b, cfg.final_iterations,
        cfg.final_burnin, cfg.final_thin, master.split(0xf1a1ULL), &chain);

    out.chain = std::move(chain);
    out.gamma_collapsed = s.all_zero;
    out.fit.method = Method::SparseGMRF;
    out.fit.alpha = s.alpha_mean;
    out.fit.beta = Image2D(data.nx, data.ny, s.beta_mean);
    out.fit.internal_coefficients = s.gamma_mean;
    out.fit.hyperparameters["a"] = best_a;
    out.fit.hyperparameters["b"] = best_b;
    out.fit.hyperparameters["sigma2_eps"] = best_s2e;
    out.fit.hyperparameters["sigma2_beta"] = best_s2b;
    out.fit.sigma2 = best_s2e;
    if (out.gamma_collapsed)
        out.fit.warnings.push_back("Ising field collapsed to all-zero in every saved draw");
    out.fit.runtime_seconds = timer.seconds();
    return out;
}

/// Log odds of gamma_l = 1 against gamma_l = 0 with beta_l integrated out;
/// exposed for verification against numerical quadrature.
inline double sparse_site_log_odds(double ising_a, double ising_b, int d_l, int d_sel,
                                   double neighbor_sum, double s_l, double c_l, double sigma2_eps,
                                   double sigma2_beta) {
    const double m = d_sel > 0 ? neighbor_sum / d_sel : 0.0;
    const double v = d_sel > 0 ? sigma2_beta / d_sel : sigma2_beta;
    const double tau = s_l / sigma2_eps + 1.0 / v;
    const double mu = (c_l / sigma2_eps + m / v) / tau;
    return ising_a + ising_b * (2.0 * d_sel - d_l) + 0.5 * std::log(1.0 / (v * tau)) +
           0.5 * mu * mu * tau - 0.5 * m * m / v;
}

} // namespace soir
