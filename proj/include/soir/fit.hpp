#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "soir/image.hpp"
#include "soir/rng.hpp"

namespace soir {

enum class Method { Splines, FPCR, PCR2D, WCR, WPLS, WNET, SparseGMRF, GMRF, GMRF2 };

inline const std::vector<Method>& all_methods() {
    static const std::vector<Method> m = {Method::Splines, Method::FPCR, Method::PCR2D,
                                          Method::WCR,     Method::WPLS, Method::WNET,
                                          Method::SparseGMRF, Method::GMRF, Method::GMRF2};
    return m;
}

inline std::string method_name(Method m) {
    switch (m) {
        case Method::Splines: return "Splines";
        case Method::FPCR: return "FPCR";
        case Method::PCR2D: return "PCR2D";
        case Method::WCR: return "WCR";
        case Method::WPLS: return "WPLS";
        case Method::WNET: return "WNET";
        case Method::SparseGMRF: return "SparseGMRF";
        case Method::GMRF: return "GMRF";
        case Method::GMRF2: return "GMRF2";
    }
    throw std::logic_error("method_name: unknown method");
}

inline Method method_from_name(const std::string& name) {
    for (Method m : all_methods())
        if (method_name(m) == name) return m;
    throw std::invalid_argument("unknown method name: " + name);
}

/// Gaussian posterior of [alpha; reduced coefficients] for Wald bands.
struct CoefficientPosterior {
    MatrixXd covariance; ///< (p + K) x (p + K)
    MatrixXd pixel_map;  ///< L x K, maps the coefficient block to beta
    Eigen::Index p = 0;  ///< size of the leading alpha block
};

struct FitResult {
    Method method = Method::Splines;
    VectorXd alpha;
    Image2D beta;
    std::map<std::string, double> hyperparameters;
    VectorXd internal_coefficients;
    double runtime_seconds = 0.0;
    double sigma2 = std::numeric_limits<double>::quiet_NaN();
    double edf = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> warnings;
    std::shared_ptr<CoefficientPosterior> coef_posterior;

    VectorXd predict(const MatrixXd& W, const MatrixXd& X) const {
        return W * alpha + X * beta.values();
    }
};

struct CVConfig {
    int folds = 5;
    std::uint64_t seed = 0;
};

/// Deterministic shuffled-block fold assignment: indices are shuffled with
/// the seed, then cut into `folds` contiguous blocks. Exhaustive and disjoint.
inline std::vector<int> cv_fold_assignment(Eigen::Index N, int folds, std::uint64_t seed) {
    if (folds < 2) throw std::invalid_argument("cv_fold_assignment: need >= 2 folds");
    if (N < folds) throw std::invalid_argument("cv_fold_assignment: fewer rows than folds");
    std::vector<int> order(static_cast<std::size_t>(N));
    for (Eigen::Index i = 0; i < N; ++i) order[static_cast<std::size_t>(i)] = static_cast<int>(i);
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<int> fold(static_cast<std::size_t>(N));
    for (Eigen::Index pos = 0; pos < N; ++pos) {
        const int f = static_cast<int>((pos * folds) / N);
        fold[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = f;
    }
    return fold;
}

namespace detail {

struct FitTimer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

inline MatrixXd select_rows(const MatrixXd& M, const std::vector<int>& fold, int f, bool in_fold) {
    Eigen::Index count = 0;
    for (const int fi : fold) count += (fi == f) == in_fold;
    MatrixXd out(count, M.cols());
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        if ((fold[static_cast<std::size_t>(i)] == f) == in_fold) out.row(r++) = M.row(i);
    return out;
}

inline VectorXd select_rows(const VectorXd& v, const std::vector<int>& fold, int f, bool in_fold) {
    Eigen::Index count = 0;
    for (const int fi : fold) count += (fi == f) == in_fold;
    VectorXd out(count);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if ((fold[static_cast<std::size_t>(i)] == f) == in_fold) out[r++] = v[i];
    return out;
}

inline VectorXd ols_solve(const MatrixXd& Z, const VectorXd& y) {
    return Z.colPivHouseholderQr().solve(y);
}

/// Residual-maker application: v - W (W'W)^{-1} W' v via the thin Q of W.
struct WProjector {
    MatrixXd Q;
    explicit WProjector(const MatrixXd& W) {
        Eigen::HouseholderQR<MatrixXd> qr(W);
        Q = qr.householderQ() * MatrixXd::Identity(W.rows(), W.cols());
    }
    VectorXd residual(const VectorXd& v) const { return v - Q * (Q.transpose() * v); }
    MatrixXd residual(const MatrixXd& M) const { return M - Q * (Q.transpose() * M); }
};

} // namespace detail

} // namespace soir
