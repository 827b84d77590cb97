#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "soir/errors.hpp"
#include "soir/image.hpp"
#include "soir/pca.hpp"
#include "soir/rng.hpp"

namespace soir {

/// Smooth Gaussian random field covariates: squared-exponential kernel with
/// length scale 0.15 of the unit domain, sampled separably (the kernel
/// factorizes over axes), rescaled into the working range and demeaned
/// pixelwise over the sample.
inline std::vector<Image2D> gen_covariates(int N, int nx, int ny, std::uint64_t seed) {
    if (N < 1 || nx < 2 || ny < 2) throw std::invalid_argument("gen_covariates: bad dimensions");
    const double length_scale = 0.15;
    auto marginal_chol = [&](int n) {
        MatrixXd K(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double d = static_cast<double>(i - j) / n / length_scale;
                K(i, j) = std::exp(-0.5 * d * d);
            }
        K.diagonal().array() += 1e-10;
        Eigen::LLT<MatrixXd> llt(K);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("gen_covariates: kernel factorization failed");
        return MatrixXd(llt.matrixL());
    };
    const MatrixXd Lx = marginal_chol(nx);
    const MatrixXd Ly = marginal_chol(ny);

    Rng rng(seed);
    std::vector<MatrixXd> fields;
    fields.reserve(static_cast<std::size_t>(N));
    double max_abs = 0.0;
    for (int i = 0; i < N; ++i) {
        MatrixXd G(ny, nx);
        for (int r = 0; r < ny; ++r)
            for (int c = 0; c < nx; ++c) G(r, c) = rng.normal();
        MatrixXd field = Ly * G * Lx.transpose();
        max_abs = std::max(max_abs, field.cwiseAbs().maxCoeff());
        fields.push_back(std::move(field));
    }
    const double scale = max_abs > 0.0 ? 1.24 / max_abs : 1.0;
    MatrixXd mean = MatrixXd::Zero(ny, nx);
    for (auto& f : fields) { f *= scale; mean += f; }
    mean /= static_cast<double>(N);
    std::vector<Image2D> out;
    out.reserve(fields.size());
    for (auto& f : fields) out.push_back(Image2D::from_matrix(f - mean));
    return out;
}

inline MatrixXd covariate_matrix(const std::vector<Image2D>& covariates) {
    if (covariates.empty()) throw std::invalid_argument("covariate_matrix: empty sample");
    MatrixXd X(static_cast<Eigen::Index>(covariates.size()), covariates.front().size());
    for (std::size_t i = 0; i < covariates.size(); ++i)
        X.row(static_cast<Eigen::Index>(i)) = covariates[i].values().transpose();
    return X;
}

enum class CoefImageKind { Bumpy, Pca, Smooth, Sparse };

inline std::string coef_image_kind_name(CoefImageKind k) {
    switch (k) {
        case CoefImageKind::Bumpy: return "bumpy";
        case CoefImageKind::Pca: return "pca";
        case CoefImageKind::Smooth: return "smooth";
        case CoefImageKind::Sparse: return "sparse";
    }
    throw std::logic_error("coef_image_kind_name: unknown kind");
}

inline CoefImageKind coef_image_kind_from_name(const std::string& s) {
    if (s == "bumpy") return CoefImageKind::Bumpy;
    if (s == "pca") return CoefImageKind::Pca;
    if (s == "smooth") return CoefImageKind::Smooth;
    if (s == "sparse") return CoefImageKind::Sparse;
    throw std::invalid_argument("unknown coefficient image kind: " + s);
}

/// Feature geometry for the synthetic coefficient images. Positions are
/// fractions of the unit square; bandwidths are fractions of the domain so
/// the shapes scale with the grid (the reference values correspond to 2, 10
/// and 4 pixels on a 64 x 64 grid).
struct CoefImageParams {
    std::vector<std::array<double, 3>> bumpy_features = {
        {0.20, 0.30, 1.0}, {0.45, 0.70, -1.0}, {0.70, 0.25, 1.0}, {0.85, 0.60, -1.0}, {0.30, 0.85, 1.0}};
    double bumpy_bandwidth = 2.0 / 64.0;
    std::vector<std::array<double, 3>> smooth_components = {
        {0.25, 0.30, 1.0}, {0.65, 0.65, 0.8}, {0.40, 0.80, 0.6}};
    double smooth_bandwidth = 10.0 / 64.0;
    std::vector<std::array<double, 3>> sparse_spikes = {{0.30, 0.35, 1.0}, {0.70, 0.70, 0.8}};
    double sparse_radius = 4.0 / 64.0;
    int pca_components = 5;
};

namespace detail {

inline Image2D gaussian_bumps(int nx, int ny, const std::vector<std::array<double, 3>>& features,
                              double bandwidth, bool density_height) {
    Image2D img = Image2D::zero(nx, ny);
    const double s2 = bandwidth * bandwidth;
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            const double x = (ix + 0.5) / nx, y = (iy + 0.5) / ny;
            double v = 0.0;
            for (const auto& f : features) {
                const double dx = x - f[0], dy = y - f[1];
                const double kernel = std::exp(-0.5 * (dx * dx + dy * dy) / s2);
                v += density_height ? f[2] * kernel / (2.0 * std::numbers::pi * s2) : f[2] * kernel;
            }
            img(ix, iy) = v;
        }
    }
    return img;
}

inline Image2D compact_spikes(int nx, int ny, const std::vector<std::array<double, 3>>& spikes,
                              double radius) {
    Image2D img = Image2D::zero(nx, ny);
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            const double x = (ix + 0.5) / nx, y = (iy + 0.5) / ny;
            double v = 0.0;
            for (const auto& s : spikes) {
                const double r = std::hypot(x - s[0], y - s[1]);
                if (r < radius) {
                    const double c = std::cos(0.5 * std::numbers::pi * r / radius);
                    v += s[2] * c * c;
                }
            }
            img(ix, iy) = v;
        }
    }
    return img;
}

inline std::array<double, 2> random_center(Rng& rng) {
    return {0.15 + 0.70 * rng.uniform(), 0.15 + 0.70 * rng.uniform()};
}

} // namespace detail

/// Synthetic coefficient images. Fixed mode uses the documented default
/// feature locations; randomized mode redraws locations (and for pca the
/// component count and loadings) from the seed, one fresh image per call.
inline Image2D gen_coef_image(CoefImageKind kind, int nx, int ny,
                              const std::vector<Image2D>& covariates, std::uint64_t seed,
                              bool randomized = false, const CoefImageParams& params = {}) {
    Rng rng(seed);
    switch (kind) {
        case CoefImageKind::Bumpy: {
            auto features = params.bumpy_features;
            if (randomized)
                for (auto& f : features) {
                    const auto c = detail::random_center(rng);
                    f[0] = c[0];
                    f[1] = c[1];
                }
            return detail::gaussian_bumps(nx, ny, features, params.bumpy_bandwidth, false);
        }
        case CoefImageKind::Smooth: {
            auto comps = params.smooth_components;
            if (randomized)
                for (auto& f : comps) {
                    const auto c = detail::random_center(rng);
                    f[0] = c[0];
                    f[1] = c[1];
                }
            return detail::gaussian_bumps(nx, ny, comps, params.smooth_bandwidth, true);
        }
        case CoefImageKind::Sparse: {
            auto spikes = params.sparse_spikes;
            if (randomized) {
                for (std::size_t k = 0; k < spikes.size(); ++k) {
                    for (int attempt = 0; attempt < 100; ++attempt) {
                        const auto c = detail::random_center(rng);
                        bool separated = true;
                        for (std::size_t j = 0; j < k; ++j)
                            if (std::hypot(c[0] - spikes[j][0], c[1] - spikes[j][1]) < 2.5 * params.sparse_radius)
                                separated = false;
                        if (separated) {
                            spikes[k][0] = c[0];
                            spikes[k][1] = c[1];
                            break;
                        }
                    }
                }
            }
            return detail::compact_spikes(nx, ny, spikes, params.sparse_radius);
        }
        case CoefImageKind::Pca: {
            if (covariates.empty())
                throw std::invalid_argument("gen_coef_image: pca kind needs covariate images");
            const int max_k = static_cast<int>(std::min<Eigen::Index>(
                {static_cast<Eigen::Index>(covariates.size()), static_cast<Eigen::Index>(nx),
                 static_cast<Eigen::Index>(ny)}));
            int K = std::min(params.pca_components, max_k);
            if (randomized) K = std::min(2 + rng.uniform_int(7), max_k); // 2..8 components
            const EigenimageSet eig = rank_one_eigenimages(covariate_matrix(covariates), nx, ny, K);
            VectorXd beta = VectorXd::Zero(static_cast<Eigen::Index>(nx) * ny);
            for (int k = 1; k <= K; ++k) {
                double coef = (k % 2 == 0 ? 1.0 : -1.0) * std::exp(-k / 5.0);
                if (randomized) coef = rng.normal() * std::exp(-k / 5.0);
                beta += coef * eig.components.col(k - 1);
            }
            return Image2D(nx, ny, beta);
        }
    }
    throw std::invalid_argument("gen_coef_image: unknown kind");
}

/// Response simulation: y = -1 + X beta + eps with the noise level calibrated
/// so that sd(signal) / sigma_eps equals the requested signal-to-noise ratio.
inline std::pair<VectorXd, double> simulate_response(const MatrixXd& X, const Image2D& beta,
                                                     double snr, std::uint64_t seed,
                                                     double intercept = -1.0) {
    if (!(snr > 0.0)) throw std::invalid_argument("simulate_response: snr must be positive");
    if (X.cols() != beta.size()) throw std::invalid_argument("simulate_response: dimension mismatch");
    const VectorXd signal = X * beta.values();
    const Eigen::Index N = signal.size();
    if (N < 2) throw std::invalid_argument("simulate_response: need N >= 2");
    const double mean = signal.mean();
    const double sd = std::sqrt((signal.array() - mean).square().sum() / static_cast<double>(N - 1));
    if (sd <= 0.0)
        throw DegenerateInputError("simulate_response: signal variance is zero (beta orthogonal to data)");
    const double sigma_eps = sd / snr;
    Rng rng(seed);
    VectorXd y(N);
    for (Eigen::Index i = 0; i < N; ++i) y[i] = intercept + signal[i] + rng.normal(0.0, sigma_eps);
    return {y, sigma_eps};
}

} // namespace soir
