#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "soir/errors.hpp"

namespace soir {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// 2D pixel grid stored as a flat vector in row-major order:
/// pixel (ix, iy) lives at index iy * nx + ix. The same type carries
/// coefficient images and covariate images.
class Image2D {
public:
    Image2D() = default;

    Image2D(int nx, int ny, VectorXd values) : nx_(nx), ny_(ny), values_(std::move(values)) {
        if (nx_ < 2 || ny_ < 2)
            throw std::invalid_argument("Image2D: nx and ny must both be >= 2");
        if (values_.size() != static_cast<Eigen::Index>(nx_) * ny_)
            throw std::invalid_argument("Image2D: value count does not match nx*ny");
        if (!values_.allFinite())
            throw std::invalid_argument("Image2D: all pixel values must be finite");
    }

    static Image2D zero(int nx, int ny) { return Image2D(nx, ny, VectorXd::Zero(static_cast<Eigen::Index>(nx) * ny)); }

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    Eigen::Index size() const { return values_.size(); }

    double operator()(int ix, int iy) const { return values_[static_cast<Eigen::Index>(iy) * nx_ + ix]; }
    double& operator()(int ix, int iy) { return values_[static_cast<Eigen::Index>(iy) * nx_ + ix]; }

    const VectorXd& values() const { return values_; }
    VectorXd& values() { return values_; }

    /// View as ny x nx matrix (rows are image rows).
    MatrixXd as_matrix() const {
        MatrixXd m(ny_, nx_);
        for (int iy = 0; iy < ny_; ++iy)
            for (int ix = 0; ix < nx_; ++ix) m(iy, ix) = (*this)(ix, iy);
        return m;
    }

    static Image2D from_matrix(const MatrixXd& m) {
        Image2D img(static_cast<int>(m.cols()), static_cast<int>(m.rows()),
                    VectorXd::Zero(m.size()));
        for (int iy = 0; iy < img.ny_; ++iy)
            for (int ix = 0; ix < img.nx_; ++ix) img(ix, iy) = m(iy, ix);
        return img;
    }

    bool same_shape(const Image2D& other) const { return nx_ == other.nx_ && ny_ == other.ny_; }

private:
    int nx_ = 0;
    int ny_ = 0;
    VectorXd values_;
};

/// Regression data (y, W, X). Rows of X are vectorized images; the first
/// column of W is expected to be an all-ones intercept.
struct RegressionDataset {
    VectorXd y;
    MatrixXd W;
    MatrixXd X;
    int nx = 0;
    int ny = 0;
    bool demeaned = false;
    VectorXd pixel_means;

    Eigen::Index n() const { return y.size(); }
    Eigen::Index p() const { return W.cols(); }
    Eigen::Index l() const { return X.cols(); }

    void validate() const {
        if (n() < 1) throw std::invalid_argument("RegressionDataset: N must be >= 1");
        if (p() < 1) throw std::invalid_argument("RegressionDataset: W needs at least the intercept column");
        if (l() < 4) throw std::invalid_argument("RegressionDataset: images need at least 4 pixels");
        if (W.rows() != n() || X.rows() != n())
            throw std::invalid_argument("RegressionDataset: row counts of y, W, X disagree");
        if (static_cast<Eigen::Index>(nx) * ny != l())
            throw std::invalid_argument("RegressionDataset: nx*ny does not match X columns");
        if (!y.allFinite() || !W.allFinite() || !X.allFinite())
            throw std::invalid_argument("RegressionDataset: non-finite entries");
    }

    Image2D beta_shaped(const VectorXd& v) const { return Image2D(nx, ny, v); }
};

inline RegressionDataset make_dataset(VectorXd y, MatrixXd W, MatrixXd X, int nx, int ny) {
    RegressionDataset d;
    d.y = std::move(y);
    d.W = std::move(W);
    d.X = std::move(X);
    d.nx = nx;
    d.ny = ny;
    d.validate();
    return d;
}

/// Subtracts each pixel column's sample mean from X; y and W are untouched.
/// The removed means are stored so images can be reconstructed.
inline RegressionDataset demean_images(const RegressionDataset& data) {
    data.validate();
    if (data.demeaned)
        throw std::invalid_argument("demean_images: dataset is already demeaned");
    if (data.n() == 0) throw std::invalid_argument("demean_images: empty dataset");
    RegressionDataset out = data;
    out.pixel_means = data.X.colwise().mean();
    out.X.rowwise() -= out.pixel_means.transpose();
    out.demeaned = true;
    return out;
}

/// Sum of squared estimation errors normalized by the error of the best
/// constant image; 1 marks performance of a constant coefficient image.
inline double relative_estimation_error(const VectorXd& beta_true, const VectorXd& beta_hat) {
    if (beta_true.size() != beta_hat.size())
        throw std::invalid_argument("relative_estimation_error: size mismatch");
    const double mean = beta_true.mean();
    const double denom = (beta_true.array() - mean).square().sum();
    if (denom <= 0.0)
        throw DegenerateInputError("relative_estimation_error: constant true image");
    return (beta_true - beta_hat).squaredNorm() / denom;
}

inline double relative_estimation_error(const Image2D& beta_true, const Image2D& beta_hat) {
    if (!beta_true.same_shape(beta_hat))
        throw std::invalid_argument("relative_estimation_error: image shapes differ");
    return relative_estimation_error(beta_true.values(), beta_hat.values());
}

/// Squared prediction error normalized by the intercept-only model.
inline double relative_prediction_error(const VectorXd& y, const VectorXd& y_hat) {
    if (y.size() != y_hat.size())
        throw std::invalid_argument("relative_prediction_error: size mismatch");
    if (y.size() < 2) throw std::invalid_argument("relative_prediction_error: need N >= 2");
    const double mean = y.mean();
    const double denom = (y.array() - mean).square().sum();
    if (denom <= 0.0)
        throw DegenerateInputError("relative_prediction_error: constant response");
    return (y - y_hat).squaredNorm() / denom;
}

/// Pearson correlation of the vectorized pixel values.
inline double image_correlation(const VectorXd& a, const VectorXd& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("image_correlation: size mismatch");
    const double ma = a.mean(), mb = b.mean();
    const VectorXd ca = a.array() - ma;
    const VectorXd cb = b.array() - mb;
    const double na = ca.norm(), nb = cb.norm();
    if (na <= 0.0 || nb <= 0.0)
        throw DegenerateInputError("image_correlation: constant input image");
    double r = ca.dot(cb) / (na * nb);
    if (r > 1.0) r = 1.0;
    if (r < -1.0) r = -1.0;
    return r;
}

inline double image_correlation(const Image2D& a, const Image2D& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("image_correlation: image shapes differ");
    return image_correlation(a.values(), b.values());
}

} // namespace soir
