#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "soir/elastic_net.hpp"
#include "soir/errors.hpp"
#include "soir/fit.hpp"
#include "soir/image.hpp"
#include "soir/pca.hpp"
#include "soir/penalized_ls.hpp"
#include "soir/pls.hpp"
#include "soir/spline_basis.hpp"
#include "soir/wavelet.hpp"

namespace soir {

// ---------------------------------------------------------------- Splines

struct SplinesConfig {
    int Kx = 15;
    int Ky = 15;
    int penalty_order = 2;
    SmoothingSelector selector = SmoothingSelector::REML;
    std::vector<double> lambda_grid = log_spaced_grid(1e-6, 1e6, 25);
};

namespace detail {

inline void require_demeaned(const RegressionDataset& data, const char* who) {
    if (!data.demeaned)
        throw std::invalid_argument(std::string(who) + ": dataset must be demeaned first");
}

/// Penalized fit on [W | D] penalizing only the D block; returns the full
/// solution and fills the posterior covariance when requested.
struct BlockFit {
    VectorXd alpha;
    VectorXd coeffs;
    double lambda = 0.0;
    double edf = 0.0;
    double sigma2 = 0.0;
    std::shared_ptr<CoefficientPosterior> posterior;
};

inline BlockFit penalized_block_fit(const MatrixXd& W, const MatrixXd& D, const VectorXd& y,
                                    const MatrixXd& penalty, const std::vector<double>& lambda_grid,
                                    SmoothingSelector selector, const MatrixXd* pixel_map,
                                    bool want_posterior) {
    const Eigen::Index p = W.cols(), K = D.cols();
    MatrixXd Z(W.rows(), p + K);
    Z << W, D;
    MatrixXd pen = MatrixXd::Zero(p + K, p + K);
    pen.bottomRightCorner(K, K) = penalty;
    PenalizedLSProblem problem{y, Z, pen, lambda_grid, selector};
    PenalizedLSResult r = solve_penalized_ls(problem);
    BlockFit out;
    out.alpha = r.coefficients.head(p);
    out.coeffs = r.coefficients.tail(K);
    out.lambda = r.lambda;
    out.edf = r.edf;
    out.sigma2 = r.sigma2;
    if (want_posterior) {
        auto post = std::make_shared<CoefficientPosterior>();
        post->covariance = penalized_ls_covariance(Z, pen, r.lambda, r.sigma2);
        post->pixel_map = pixel_map ? *pixel_map : MatrixXd::Identity(K, K);
        post->p = p;
        out.posterior = std::move(post);
    }
    return out;
}

} // namespace detail

/// Tensor-product penalized spline regression; beta = B b with b penalized by
/// the anisotropic second-difference penalty and lambda selected on the grid.
inline FitResult fit_splines(const RegressionDataset& data, const SplinesConfig& cfg = {}) {
    detail::require_demeaned(data, "fit_splines");
    detail::FitTimer timer;
    const SplineBasis2D basis = eval_spline_basis(data.nx, data.ny, cfg.Kx, cfg.Ky, cfg.penalty_order);
    const MatrixXd D = data.X * basis.B;

    FitResult fit;
    fit.method = Method::Splines;
    if (D.cwiseAbs().maxCoeff() == 0.0) {
        // no image signal at all: alpha is plain OLS, beta vanishes
        fit.alpha = detail::ols_solve(data.W, data.y);
        fit.beta = Image2D::zero(data.nx, data.ny);
        fit.internal_coefficients = VectorXd::Zero(basis.B.cols());
        fit.warnings.push_back("image design is zero; fitted intercept-only model");
        fit.runtime_seconds = timer.seconds();
        return fit;
    }
    detail::BlockFit b = detail::penalized_block_fit(data.W, D, data.y, basis.penalty,
                                                     cfg.lambda_grid, cfg.selector, &basis.B, true);
    fit.alpha = b.alpha;
    fit.beta = Image2D(data.nx, data.ny, basis.B * b.coeffs);
    fit.internal_coefficients = b.coeffs;
    fit.hyperparameters["lambda"] = b.lambda;
    fit.sigma2 = b.sigma2;
    fit.edf = b.edf;
    fit.coef_posterior = b.posterior;
    fit.runtime_seconds = timer.seconds();
    return fit;
}

// ------------------------------------------------------------------ FPCR

struct FpcrConfig {
    int Kx = 15;
    int Ky = 15;
    int penalty_order = 2;
    SmoothingSelector selector = SmoothingSelector::REML;
    std::vector<double> lambda_grid = log_spaced_grid(1e-6, 1e6, 25);
    std::vector<int> K0_grid = {5, 10, 25, 50, 100, 150};
    CVConfig cv;
};

/// Spline expansion followed by principal components of XB: b = V0 b~ with
/// K0 chosen by cross-validation, penalized fit in the reduced space.
inline FitResult fit_fpcr(const RegressionDataset& data, const FpcrConfig& cfg = {}) {
    detail::require_demeaned(data, "fit_fpcr");
    detail::FitTimer timer;
    const SplineBasis2D basis = eval_spline_basis(data.nx, data.ny, cfg.Kx, cfg.Ky, cfg.penalty_order);
    const MatrixXd D = data.X * basis.B;
    if (D.cwiseAbs().maxCoeff() == 0.0)
        throw DegenerateInputError("fit_fpcr: image design XB is identically zero");

    FitResult fit;
    fit.method = Method::FPCR;
    const Eigen::Index K = basis.B.cols();
    PcaResult pca = pca_svd(D, std::min<Eigen::Index>(K, data.n()));
    const Eigen::Index rank = pca.components.cols();

    std::vector<int> grid;
    for (int K0 : cfg.K0_grid) {
        if (K0 < 1) continue;
        if (K0 > rank) {
            if (grid.empty() || grid.back() != static_cast<int>(rank)) {
                grid.push_back(static_cast<int>(rank));
                fit.warnings.push_back("K0 = " + std::to_string(K0) + " truncated to rank " +
                                       std::to_string(rank));
            }
            continue;
        }
        grid.push_back(K0);
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    if (grid.empty()) throw std::invalid_argument("fit_fpcr: empty K0 grid");

    const std::vector<int> fold = cv_fold_assignment(data.n(), cfg.cv.folds, cfg.cv.seed);
    int best_K0 = grid.front();
    double best_loss = std::numeric_limits<double>::infinity();
    for (const int K0 : grid) {
        const MatrixXd V0 = pca.components.leftCols(K0);
        const MatrixXd DV = D * V0;
        const MatrixXd pen = V0.transpose() * basis.penalty * V0;
        double sse = 0.0;
        Eigen::Index n_held = 0;
        bool ok = true;
        for (int f = 0; f < cfg.cv.folds; ++f) {
            const MatrixXd W_tr = detail::select_rows(data.W, fold, f, false);
            const MatrixXd DV_tr = detail::select_rows(DV, fold, f, false);
            const VectorXd y_tr = detail::select_rows(data.y, fold, f, false);
            try {
                detail::BlockFit bf = detail::penalized_block_fit(W_tr, DV_tr, y_tr, pen,
                                                                  cfg.lambda_grid, cfg.selector,
                                                                  nullptr, false);
                const MatrixXd W_ho = detail::select_rows(data.W, fold, f, true);
                const MatrixXd DV_ho = detail::select_rows(DV, fold, f, true);
                const VectorXd y_ho = detail::select_rows(data.y, fold, f, true);
                sse += (y_ho - W_ho * bf.alpha - DV_ho * bf.coeffs).squaredNorm();
                n_held += y_ho.size();
            } catch (const std::exception&) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        const double loss = sse / static_cast<double>(n_held);
        if (best_loss == std::numeric_limits<double>::infinity() ||
            loss < best_loss - 1e-12 * (1.0 + std::abs(best_loss))) {
            best_loss = loss;
            best_K0 = K0;
        }
    }

    const MatrixXd V0 = pca.components.leftCols(best_K0);
    const MatrixXd DV = D * V0;
    const MatrixXd pen = V0.transpose() * basis.penalty * V0;
    const MatrixXd pixel_map = basis.B * V0;
    detail::BlockFit bf = detail::penalized_block_fit(data.W, DV, data.y, pen, cfg.lambda_grid,
                                                      cfg.selector, &pixel_map, true);
    fit.alpha = bf.alpha;
    fit.beta = Image2D(data.nx, data.ny, pixel_map * bf.coeffs);
    fit.internal_coefficients = V0 * bf.coeffs; // spline-space coefficients
    fit.hyperparameters["K0"] = best_K0;
    fit.hyperparameters["lambda"] = bf.lambda;
    fit.sigma2 = bf.sigma2;
    fit.edf = bf.edf;
    fit.coef_posterior = bf.posterior;
    fit.runtime_seconds = timer.seconds();
    return fit;
}

// ----------------------------------------------------------------- PCR2D

struct Pcr2dConfig {
    int n_components = 25;
    std::pair<double, double> lambda_bounds = {1e-4, 1e2};
    std::vector<int> K_grid = {1, 5, 10, 15, 20, 25};
    CVConfig cv;
};

/// Regression on scores of smooth rank-one eigenimages; K chosen by CV.
inline FitResult fit_pcr2d(const RegressionDataset& data, const Pcr2dConfig& cfg = {}) {
    detail::require_demeaned(data, "fit_pcr2d");
    detail::FitTimer timer;
    FitResult fit;
    fit.method = Method::PCR2D;
    const int max_K = static_cast<int>(std::min<Eigen::Index>(
        {data.n(), static_cast<Eigen::Index>(data.nx), static_cast<Eigen::Index>(data.ny)}));
    int n_comp = cfg.n_components;
    if (n_comp > max_K) {
        n_comp = max_K;
        fit.warnings.push_back("component count capped at " + std::to_string(max_K));
    }
    const EigenimageSet eig = rank_one_eigenimages(data.X, data.nx, data.ny, n_comp, cfg.lambda_bounds);

    std::vector<int> grid;
    for (int K : cfg.K_grid)
        if (K >= 1 && K <= n_comp) grid.push_back(K);
    if (grid.empty()) grid.push_back(n_comp);
    std::sort(grid.begin(), grid.end());

    const std::vector<int> fold = cv_fold_assignment(data.n(), cfg.cv.folds, cfg.cv.seed);
    int best_K = grid.front();
    double best_loss = std::numeric_limits<double>::infinity();
    for (const int K : grid) {
        double sse = 0.0;
        Eigen::Index n_held = 0;
        for (int f = 0; f < cfg.cv.folds; ++f) {
            const MatrixXd W_tr = detail::select_rows(data.W, fold, f, false);
            const MatrixXd S_tr = detail::select_rows(MatrixXd(eig.scores.leftCols(K)), fold, f, false);
            const VectorXd y_tr = detail::select_rows(data.y, fold, f, false);
            MatrixXd Z(W_tr.rows(), W_tr.cols() + K);
            Z << W_tr, S_tr;
            const VectorXd coef = detail::ols_solve(Z, y_tr);
            const MatrixXd W_ho = detail::select_rows(data.W, fold, f, true);
            const MatrixXd S_ho = detail::select_rows(MatrixXd(eig.scores.leftCols(K)), fold, f, true);
            const VectorXd y_ho = detail::select_rows(data.y, fold, f, true);
            sse += (y_ho - W_ho * coef.head(W_tr.cols()) - S_ho * coef.tail(K)).squaredNorm();
            n_held += y_ho.size();
        }
        const double loss = sse / static_cast<double>(n_held);
        if (best_loss == std::numeric_limits<double>::infinity() ||
            loss < best_loss - 1e-12 * (1.0 + std::abs(best_loss))) {
            best_loss = loss;
            best_K = K;
        }
    }

    MatrixXd Z(data.n(), data.p() + best_K);
    Z << data.W, eig.scores.leftCols(best_K);
    const VectorXd coef = detail::ols_solve(Z, data.y);
    fit.alpha = coef.head(data.p());
    const VectorXd b = coef.tail(best_K);
    fit.beta = Image2D(data.nx, data.ny, eig.components.leftCols(best_K) * b);
    fit.internal_coefficients = VectorXd::Zero(n_comp);
    fit.internal_coefficients.head(best_K) = b;
    fit.hyperparameters["K"] = best_K;
    const VectorXd resid = data.y - Z * coef;
    fit.sigma2 = resid.squaredNorm() / std::max<double>(1.0, static_cast<double>(data.n() - data.p() - best_K));
    fit.runtime_seconds = timer.seconds();
    return fit;
}

// ------------------------------------------------------- wavelet methods

struct WaveletScreenConfig {
    int m0 = 3;
    std::vector<int> Kstar_grid = {10, 25, 50, 100, 250, 500, 1000};
};

namespace detail {

struct ScreenedWavelets {
    WaveletBasis2D basis;
    MatrixXd theta; ///< N x L wavelet coefficients of every image
};

inline ScreenedWavelets wavelet_coefficients(const RegressionDataset& data, int m0) {
    if (data.nx != data.ny)
        throw std::invalid_argument("wavelet methods: images must be square");
    ScreenedWavelets out{make_wavelet_basis(data.nx, m0), MatrixXd(data.n(), data.l())};
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const Image2D img(data.nx, data.ny, data.X.row(i).transpose());
        out.theta.row(i) = dwt2_forward(img, out.basis).transpose();
    }
    return out;
}

/// Indices of the K* columns with the highest sample variance (ties broken
/// toward the lower index). Throws if every column is constant.
inline std::vector<Eigen::Index> screen_by_variance(const MatrixXd& theta, int Kstar) {
    const Eigen::Index L = theta.cols();
    VectorXd var(L);
    for (Eigen::Index j = 0; j < L; ++j) {
        const double mean = theta.col(j).mean();
        var[j] = (theta.col(j).array() - mean).square().sum();
    }
    if (var.maxCoeff() <= 0.0)
        throw DegenerateInputError("wavelet screening: all coefficients have zero variance");
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(L));
    for (Eigen::Index j = 0; j < L; ++j) idx[static_cast<std::size_t>(j)] = j;
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return var[a] > var[b]; });
    idx.resize(static_cast<std::size_t>(std::min<Eigen::Index>(Kstar, L)));
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline MatrixXd select_cols(const MatrixXd& M, const std::vector<Eigen::Index>& idx) {
    MatrixXd out(M.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = M.col(idx[j]);
    return out;
}

inline std::vector<int> capped_kstar_grid(const std::vector<int>& grid, Eigen::Index L,
                                          std::vector<std::string>& warnings) {
    std::vector<int> out;
    for (int k : grid) {
        if (k < 1) continue;
        if (k > L) {
            if (out.empty() || out.back() != static_cast<int>(L)) {
                out.push_back(static_cast<int>(L));
                warnings.push_back("K* = " + std::to_string(k) + " capped at L = " + std::to_string(L));
            }
            continue;
        }
        out.push_back(k);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (out.empty()) throw std::invalid_argument("wavelet methods: empty K* grid");
    return out;
}

} // namespace detail

struct WcrConfig {
    WaveletScreenConfig screen;
    std::vector<int> K0_grid = {5, 10, 15, 25, 50, 75};
    CVConfig cv;
};

using WplsConfig = WcrConfig;

namespace detail {

/// Shared WCR / WPLS pipeline: screen, reduce (PCA or PLS), regress, invert.
inline FitResult fit_wavelet_reduced(const RegressionDataset& data, const WcrConfig& cfg, bool pls) {
    require_demeaned(data, pls ? "fit_wpls" : "fit_wcr");
    FitTimer timer;
    FitResult fit;
    fit.method = pls ? Method::WPLS : Method::WCR;
    const ScreenedWavelets sw = wavelet_coefficients(data, cfg.screen.m0);
    const std::vector<int> kstar_grid = capped_kstar_grid(cfg.screen.Kstar_grid, data.l(), fit.warnings);
    const std::vector<int> fold = cv_fold_assignment(data.n(), cfg.cv.folds, cfg.cv.seed);

    const WProjector wproj(data.W);

    int best_Kstar = kstar_grid.front();
    int best_K0 = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (const int Kstar : kstar_grid) {
        for (const int K0 : cfg.K0_grid) {
            if (K0 > Kstar) continue;
            double sse = 0.0;
            Eigen::Index n_held = 0;
            bool ok = true;
            for (int f = 0; f < cfg.cv.folds; ++f) {
                const MatrixXd th_tr = select_rows(sw.theta, fold, f, false);
                const MatrixXd W_tr = select_rows(data.W, fold, f, false);
                const VectorXd y_tr = select_rows(data.y, fold, f, false);
                try {
                    const std::vector<Eigen::Index> idx = screen_by_variance(th_tr, Kstar);
                    const MatrixXd Xs_tr = select_cols(th_tr, idx);
                    VectorXd alpha, bstar;
                    if (pls) {
                        const WProjector proj_tr(W_tr);
                        const Eigen::Index k0c = std::min<Eigen::Index>(K0, std::min(Xs_tr.rows(), Xs_tr.cols()));
                        PlsResult pr = pls_components(proj_tr.residual(Xs_tr), proj_tr.residual(y_tr), k0c);
                        bstar = pr.coefficients;
                        alpha = ols_solve(W_tr, y_tr - Xs_tr * bstar);
                    } else {
                        const Eigen::Index k0c = std::min<Eigen::Index>(K0, std::min(Xs_tr.rows(), Xs_tr.cols()));
                        PcaResult pc = pca_svd(Xs_tr, k0c);
                        MatrixXd Z(W_tr.rows(), W_tr.cols() + pc.components.cols());
                        Z << W_tr, Xs_tr * pc.components;
                        const VectorXd coef = ols_solve(Z, y_tr);
                        alpha = coef.head(W_tr.cols());
                        bstar = pc.components * coef.tail(pc.components.cols());
                    }
                    const MatrixXd th_ho = select_rows(sw.theta, fold, f, true);
                    const MatrixXd W_ho = select_rows(data.W, fold, f, true);
                    const VectorXd y_ho = select_rows(data.y, fold, f, true);
                    sse += (y_ho - W_ho * alpha - select_cols(th_ho, idx) * bstar).squaredNorm();
                    n_held += y_ho.size();
                } catch (const std::exception&) {
                    ok = false;
                    break;
                }
            }
            if (!ok) continue;
            const double loss = sse / static_cast<double>(n_held);
            if (best_loss == std::numeric_limits<double>::infinity() ||
                loss < best_loss - 1e-12 * (1.0 + std::abs(best_loss))) {
                best_loss = loss;
                best_Kstar = Kstar;
                best_K0 = K0;
            }
        }
    }
    if (best_K0 == 0)
        throw DegenerateInputError(std::string(pls ? "fit_wpls" : "fit_wcr") +
                                   ": no admissible (K*, K0) combination");

    const std::vector<Eigen::Index> idx = screen_by_variance(sw.theta, best_Kstar);
    const MatrixXd Xs = select_cols(sw.theta, idx);
    VectorXd alpha, bstar;
    if (pls) {
        const Eigen::Index k0c = std::min<Eigen::Index>(best_K0, std::min(Xs.rows(), Xs.cols()));
        PlsResult pr = pls_components(wproj.residual(Xs), wproj.residual(data.y), k0c);
        bstar = pr.coefficients;
        alpha = ols_solve(data.W, data.y - Xs * bstar);
    } else {
        const Eigen::Index k0c = std::min<Eigen::Index>(best_K0, std::min(Xs.rows(), Xs.cols()));
        PcaResult pc = pca_svd(Xs, k0c);
        MatrixXd Z(data.n(), data.p() + pc.components.cols());
        Z << data.W, Xs * pc.components;
        const VectorXd coef = ols_solve(Z, data.y);
        alpha = coef.head(data.p());
        bstar = pc.components * coef.tail(pc.components.cols());
    }
    VectorXd b = VectorXd::Zero(data.l());
    for (std::size_t j = 0; j < idx.size(); ++j) b[idx[j]] = bstar[static_cast<Eigen::Index>(j)];
    fit.alpha = alpha;
    fit.beta = dwt2_inverse(b, sw.basis);
    fit.internal_coefficients = b;
    fit.hyperparameters["K_star"] = best_Kstar;
    fit.hyperparameters["K0"] = best_K0;
    const VectorXd resid = data.y - data.W * alpha - Xs * bstar;
    fit.sigma2 = resid.squaredNorm() /
                 std::max<double>(1.0, static_cast<double>(data.n() - data.p() - best_K0));
    fit.runtime_seconds = timer.seconds();
    return fit;
}

} // namespace detail

inline FitResult fit_wcr(const RegressionDataset& data, const WcrConfig& cfg = {}) {
    return detail::fit_wavelet_reduced(data, cfg, false);
}

inline FitResult fit_wpls(const RegressionDataset& data, const WplsConfig& cfg = {}) {
    return detail::fit_wavelet_reduced(data, cfg, true);
}

// ------------------------------------------------------------------ WNET

struct WnetConfig {
    WaveletScreenConfig screen;
    std::vector<double> eta_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
    int path_length = 100;
    std::vector<double> lambda_path; ///< optional explicit path shared by all (K*, eta)
    CVConfig cv;
};

/// Elastic net on screened wavelet coefficients. Scalar covariates stay
/// unpenalized: y and the screened columns are residualized on W before the
/// net step and alpha is recovered afterwards.
inline FitResult fit_wnet(const RegressionDataset& data, const WnetConfig& cfg = {}) {
    detail::require_demeaned(data, "fit_wnet");
    detail::FitTimer timer;
    FitResult fit;
    fit.method = Method::WNET;
    const detail::ScreenedWavelets sw = detail::wavelet_coefficients(data, cfg.screen.m0);
    const std::vector<int> kstar_grid = detail::capped_kstar_grid(cfg.screen.Kstar_grid, data.l(), fit.warnings);
    const std::vector<int> fold = cv_fold_assignment(data.n(), cfg.cv.folds, cfg.cv.seed);
    const detail::WProjector wproj(data.W);
    const VectorXd y_res = wproj.residual(data.y);

    int best_Kstar = kstar_grid.front();
    double best_eta = cfg.eta_grid.front();
    double best_lambda = 0.0;
    double best_loss = std::numeric_limits<double>::infinity();

    for (const int Kstar : kstar_grid) {
        const std::vector<Eigen::Index> idx = detail::screen_by_variance(sw.theta, Kstar);
        const MatrixXd Xs_res = wproj.residual(detail::select_cols(sw.theta, idx));
        for (const double eta : cfg.eta_grid) {
            const std::vector<double> path = cfg.lambda_path.empty()
                ? elastic_net_default_path(Xs_res, y_res, eta, cfg.path_length)
                : cfg.lambda_path;
            // per-fold paths share the full-data lambda sequence
            MatrixXd fold_sse = MatrixXd::Zero(static_cast<Eigen::Index>(path.size()), 1);
            Eigen::Index n_held = 0;
            bool ok = true;
            for (int f = 0; f < cfg.cv.folds; ++f) {
                const MatrixXd W_tr = detail::select_rows(data.W, fold, f, false);
                const MatrixXd Xs_tr_raw = detail::select_rows(detail::select_cols(sw.theta, idx), fold, f, false);
                const VectorXd y_tr = detail::select_rows(data.y, fold, f, false);
                try {
                    const detail::WProjector proj_tr(W_tr);
                    const MatrixXd Xs_tr = proj_tr.residual(Xs_tr_raw);
                    const VectorXd yr_tr = proj_tr.residual(y_tr);
                    const ElasticNetPath enp = elastic_net(Xs_tr, yr_tr, eta, path);
                    const MatrixXd W_ho = detail::select_rows(data.W, fold, f, true);
                    const MatrixXd Xs_ho = detail::select_rows(detail::select_cols(sw.theta, idx), fold, f, true);
                    const VectorXd y_ho = detail::select_rows(data.y, fold, f, true);
                    for (std::size_t li = 0; li < path.size(); ++li) {
                        const VectorXd bs = enp.coefficients.col(static_cast<Eigen::Index>(li));
                        const VectorXd a = detail::ols_solve(W_tr, y_tr - Xs_tr_raw * bs);
                        fold_sse(static_cast<Eigen::Index>(li), 0) +=
                            (y_ho - W_ho * a - Xs_ho * bs).squaredNorm();
                    }
                    n_held += y_ho.size();
                } catch (const std::exception&) {
                    ok = false;
                    break;
                }
            }
            if (!ok) continue;
            for (std::size_t li = 0; li < path.size(); ++li) {
                const double loss = fold_sse(static_cast<Eigen::Index>(li), 0) / static_cast<double>(n_held);
                if (best_loss == std::numeric_limits<double>::infinity() ||
                loss < best_loss - 1e-12 * (1.0 + std::abs(best_loss))) {
                    best_loss = loss;
                    best_Kstar = Kstar;
                    best_eta = eta;
                    best_lambda = path[li];
                }
            }
        }
    }
    if (best_loss == std::numeric_limits<double>::infinity())
        throw DegenerateInputError("fit_wnet: every (K*, eta) combination failed");

    const std::vector<Eigen::Index> idx = detail::screen_by_variance(sw.theta, best_Kstar);
    const MatrixXd Xs = detail::select_cols(sw.theta, idx);
    const MatrixXd Xs_res = wproj.residual(Xs);
    std::vector<double> final_path = cfg.lambda_path.empty()
        ? elastic_net_default_path(Xs_res, y_res, best_eta, cfg.path_length)
        : cfg.lambda_path;
    const ElasticNetPath enp = elastic_net(Xs_res, y_res, best_eta, final_path);
    Eigen::Index chosen = 0;
    for (std::size_t li = 0; li < final_path.size(); ++li)
        if (final_path[li] == best_lambda) { chosen = static_cast<Eigen::Index>(li); break; }
    const VectorXd bstar = enp.coefficients.col(chosen);

    VectorXd b = VectorXd::Zero(data.l());
    for (std::size_t j = 0; j < idx.size(); ++j) b[idx[j]] = bstar[static_cast<Eigen::Index>(j)];
    fit.alpha = detail::ols_solve(data.W, data.y - Xs * bstar);
    fit.beta = dwt2_inverse(b, sw.basis);
    fit.internal_coefficients = b;
    fit.hyperparameters["K_star"] = best_Kstar;
    fit.hyperparameters["eta"] = best_eta;
    fit.hyperparameters["lambda"] = best_lambda;
    const VectorXd resid = data.y - data.W * fit.alpha - Xs * bstar;
    fit.sigma2 = resid.squaredNorm() / std::max<double>(1.0, static_cast<double>(data.n() - data.p()));
    fit.runtime_seconds = timer.seconds();
    return fit;
}

} // namespace soir
