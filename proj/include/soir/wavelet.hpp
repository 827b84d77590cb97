#pragma once

#include <Eigen/Core>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "soir/image.hpp"

namespace soir {

namespace detail {

using cplx = std::complex<long double>;

/// Durand-Kerner root finder for a complex polynomial given by ascending
/// coefficients. Adequate for the small, well-separated spectra used here.
inline std::vector<cplx> polynomial_roots(std::vector<cplx> coeff) {
    while (coeff.size() > 1 && std::abs(coeff.back()) == 0.0L) coeff.pop_back();
    const int deg = static_cast<int>(coeff.size()) - 1;
    if (deg < 1) return {};
    for (auto& c : coeff) c /= coeff.back();
    auto eval = [&](cplx z) {
        cplx acc = 0.0L;
        for (int i = deg; i >= 0; --i) acc = acc * z + coeff[static_cast<std::size_t>(i)];
        return acc;
    };
    std::vector<cplx> r(static_cast<std::size_t>(deg));
    cplx seed(0.4L, 0.9L), p = 1.0L;
    for (auto& ri : r) { p *= seed; ri = p; }
    for (int iter = 0; iter < 500; ++iter) {
        long double delta = 0.0L;
        for (int i = 0; i < deg; ++i) {
            cplx denom = 1.0L;
            for (int j = 0; j < deg; ++j)
                if (j != i) denom *= (r[static_cast<std::size_t>(i)] - r[static_cast<std::size_t>(j)]);
            const cplx step = eval(r[static_cast<std::size_t>(i)]) / denom;
            r[static_cast<std::size_t>(i)] -= step;
            delta = std::max(delta, std::abs(step));
        }
        if (delta < 1e-24L) break;
    }
    return r;
}

inline std::vector<cplx> poly_multiply(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    std::vector<cplx> out(a.size() + b.size() - 1, cplx(0.0L));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

/// Deviation of the filter's frequency-response phase from the best linear
/// fit; the least-asymmetric factorization minimizes this.
inline long double phase_nonlinearity(const std::vector<long double>& h) {
    const int T = 1024;
    std::vector<long double> phase(static_cast<std::size_t>(T));
    long double prev = 0.0L;
    for (int t = 0; t < T; ++t) {
        const long double w = 0.95L * std::numbers::pi_v<long double> * (t + 0.5L) / T;
        cplx H = 0.0L;
        for (std::size_t m = 0; m < h.size(); ++m)
            H += h[m] * std::exp(cplx(0.0L, -w * static_cast<long double>(m)));
        long double ph = std::arg(H);
        while (ph - prev > std::numbers::pi_v<long double>) ph -= 2.0L * std::numbers::pi_v<long double>;
        while (ph - prev < -std::numbers::pi_v<long double>) ph += 2.0L * std::numbers::pi_v<long double>;
        phase[static_cast<std::size_t>(t)] = ph;
        prev = ph;
    }
    // least-squares line ph ~ a + b w
    long double sw = 0, sww = 0, sp = 0, swp = 0;
    for (int t = 0; t < T; ++t) {
        const long double w = 0.95L * std::numbers::pi_v<long double> * (t + 0.5L) / T;
        sw += w; sww += w * w; sp += phase[static_cast<std::size_t>(t)]; swp += w * phase[static_cast<std::size_t>(t)];
    }
    const long double det = T * sww - sw * sw;
    const long double b = (T * swp - sw * sp) / det;
    const long double a = (sp - b * sw) / T;
    long double score = 0.0L;
    for (int t = 0; t < T; ++t) {
        const long double w = 0.95L * std::numbers::pi_v<long double> * (t + 0.5L) / T;
        const long double res = phase[static_cast<std::size_t>(t)] - a - b * w;
        score += res * res;
    }
    return score;
}

/// Orthonormal scaling filter with `vm` vanishing moments via spectral
/// factorization of the Daubechies half-band polynomial. Among the valid
/// factorizations the one with the most linear phase is returned
/// (least-asymmetric family). Filter length is 2*vm.
inline std::vector<double> least_asymmetric_filter(int vm) {
    // B(y) = sum_k C(vm-1+k, k) y^k
    std::vector<cplx> B(static_cast<std::size_t>(vm));
    long double c = 1.0L;
    for (int k = 0; k < vm; ++k) {
        B[static_cast<std::size_t>(k)] = c;
        c = c * (vm + k) / (k + 1);
    }
    const std::vector<cplx> yroots = polynomial_roots(B);

    // Each y-root maps to a reciprocal pair z, 1/z via z^2 - (2-4y) z + 1 = 0.
    std::vector<cplx> fixed_roots;                 // real y: inside-circle z
    std::vector<std::pair<cplx, cplx>> pair_roots; // complex y (Im>0): inside z and reciprocal
    for (const cplx& y : yroots) {
        const cplx cc = 1.0L - 2.0L * y;
        const cplx s = std::sqrt(cc * cc - 1.0L);
        cplx z = cc - s;
        if (std::abs(z) > 1.0L) z = cc + s;
        if (std::abs(z) > 1.0L) z = 1.0L / z;
        if (std::abs(y.imag()) < 1e-12L) {
            fixed_roots.push_back(cplx(z.real(), 0.0L));
        } else if (y.imag() > 0.0L) {
            pair_roots.emplace_back(z, 1.0L / std::conj(z));
        }
    }

    const int q = static_cast<int>(pair_roots.size());
    std::vector<long double> best;
    long double best_score = 0.0L;
    for (int mask = 0; mask < (1 << q); ++mask) {
        std::vector<cplx> poly{cplx(1.0L)};
        auto mul_root = [&](cplx root) { poly = poly_multiply(poly, {-root, cplx(1.0L)}); };
        for (const cplx& z : fixed_roots) mul_root(z);
        for (int i = 0; i < q; ++i) {
            const cplx z = (mask >> i) & 1 ? pair_roots[static_cast<std::size_t>(i)].second
                                           : pair_roots[static_cast<std::size_t>(i)].first;
            mul_root(z);
            mul_root(std::conj(z));
        }
        for (int i = 0; i < vm; ++i) poly = poly_multiply(poly, {cplx(0.5L), cplx(0.5L)});
        std::vector<long double> h(poly.size());
        long double sum = 0.0L;
        for (std::size_t m = 0; m < poly.size(); ++m) { h[m] = poly[m].real(); sum += h[m]; }
        const long double scale = std::sqrt(2.0L) / sum;
        for (auto& v : h) v *= scale;
        const long double score = phase_nonlinearity(h);
        if (best.empty() || score < best_score) { best = h; best_score = score; }
    }
    std::vector<double> out(best.size());
    for (std::size_t m = 0; m < best.size(); ++m) out[m] = static_cast<double>(best[m]);
    return out;
}

inline bool is_power_of_two(int n) { return n >= 1 && (n & (n - 1)) == 0; }

inline int integer_log2(int n) {
    int lg = 0;
    while ((1 << lg) < n) ++lg;
    return lg;
}

} // namespace detail

/// Orthonormal 2D wavelet transform: Daubechies least-asymmetric filters with
/// 10 vanishing moments, periodic boundaries, Mallat pyramid stopping at
/// resolution level m0 (coarse block of side 2^m0).
///
/// Coefficient vector layout (length side^2): the smooth block first
/// (row-major), then for each detail scale from coarse to fine the x-detail,
/// y-detail and diagonal blocks, each row-major.
struct WaveletBasis2D {
    int side = 0;
    int m0_requested = 3;
    int m0_effective = 3;
    int levels = 0;
    std::vector<double> lowpass;
    std::vector<double> highpass;

    int coarse_side() const { return side >> levels; }
};

inline WaveletBasis2D make_wavelet_basis(int side, int m0 = 3, int vanishing_moments = 10) {
    if (!detail::is_power_of_two(side) || side < 2)
        throw std::invalid_argument("wavelet basis: image side must be a power of 2 (>= 2)");
    if (m0 < 0) throw std::invalid_argument("wavelet basis: m0 must be non-negative");
    WaveletBasis2D b;
    b.side = side;
    b.m0_requested = m0;
    b.m0_effective = std::min(m0, detail::integer_log2(side));
    b.levels = detail::integer_log2(side) - b.m0_effective;
    static const std::vector<double> sym10 = detail::least_asymmetric_filter(10);
    b.lowpass = vanishing_moments == 10 ? sym10 : detail::least_asymmetric_filter(vanishing_moments);
    const std::size_t M = b.lowpass.size();
    b.highpass.resize(M);
    for (std::size_t m = 0; m < M; ++m)
        b.highpass[m] = (m % 2 == 0 ? 1.0 : -1.0) * b.lowpass[M - 1 - m];
    return b;
}

namespace detail {

inline void periodic_analysis(const std::vector<double>& x, int n,
                              const std::vector<double>& h, const std::vector<double>& g,
                              std::vector<double>& low, std::vector<double>& high) {
    const int M = static_cast<int>(h.size());
    const int half = n / 2;
    for (int k = 0; k < half; ++k) {
        double a = 0.0, d = 0.0;
        for (int m = 0; m < M; ++m) {
            const double v = x[static_cast<std::size_t>((2 * k + m) % n)];
            a += h[static_cast<std::size_t>(m)] * v;
            d += g[static_cast<std::size_t>(m)] * v;
        }
        low[static_cast<std::size_t>(k)] = a;
        high[static_cast<std::size_t>(k)] = d;
    }
}

inline void periodic_synthesis(const std::vector<double>& low, const std::vector<double>& high, int n,
                               const std::vector<double>& h, const std::vector<double>& g,
                               std::vector<double>& x) {
    const int M = static_cast<int>(h.size());
    const int half = n / 2;
    std::fill(x.begin(), x.begin() + n, 0.0);
    for (int k = 0; k < half; ++k) {
        const double a = low[static_cast<std::size_t>(k)];
        const double d = high[static_cast<std::size_t>(k)];
        for (int m = 0; m < M; ++m) {
            x[static_cast<std::size_t>((2 * k + m) % n)] +=
                h[static_cast<std::size_t>(m)] * a + g[static_cast<std::size_t>(m)] * d;
        }
    }
}

} // namespace detail

inline VectorXd dwt2_forward(const Image2D& img, const WaveletBasis2D& basis) {
    if (img.nx() != img.ny())
        throw std::invalid_argument("dwt2_forward: image must be square");
    if (img.nx() != basis.side)
        throw std::invalid_argument("dwt2_forward: image side does not match basis");
    const int n = basis.side;
    MatrixXd A = img.as_matrix();
    std::vector<double> buf(static_cast<std::size_t>(n)), lo(static_cast<std::size_t>(n / 2)),
        hi(static_cast<std::size_t>(n / 2));
    const int s0 = basis.coarse_side();
    for (int cur = n; cur > s0; cur /= 2) {
        const int half = cur / 2;
        for (int r = 0; r < cur; ++r) { // along x
            for (int c = 0; c < cur; ++c) buf[static_cast<std::size_t>(c)] = A(r, c);
            detail::periodic_analysis(buf, cur, basis.lowpass, basis.highpass, lo, hi);
            for (int c = 0; c < half; ++c) { A(r, c) = lo[static_cast<std::size_t>(c)]; A(r, c + half) = hi[static_cast<std::size_t>(c)]; }
        }
        for (int c = 0; c < cur; ++c) { // along y
            for (int r = 0; r < cur; ++r) buf[static_cast<std::size_t>(r)] = A(r, c);
            detail::periodic_analysis(buf, cur, basis.lowpass, basis.highpass, lo, hi);
            for (int r = 0; r < half; ++r) { A(r, c) = lo[static_cast<std::size_t>(r)]; A(r + half, c) = hi[static_cast<std::size_t>(r)]; }
        }
    }
    // serialize: smooth block, then x / y / diagonal details, coarse to fine
    VectorXd out(static_cast<Eigen::Index>(n) * n);
    Eigen::Index pos = 0;
    for (int r = 0; r < s0; ++r)
        for (int c = 0; c < s0; ++c) out[pos++] = A(r, c);
    for (int s = s0; s < n; s *= 2) {
        for (int r = 0; r < s; ++r)
            for (int c = 0; c < s; ++c) out[pos++] = A(r, c + s);
        for (int r = 0; r < s; ++r)
            for (int c = 0; c < s; ++c) out[pos++] = A(r + s, c);
        for (int r = 0; r < s; ++r)
            for (int c = 0; c < s; ++c) out[pos++] = A(r + s, c + s);
    }
    return out;
}

inline Image2D dwt2_inverse(const VectorXd& coeffs, const WaveletBasis2D& basis) {
    const int n = basis.side;
    if (coeffs.size() != static_cast<Eigen::Index>(n) * n)
        throw std::invalid_argument("dwt2_inverse: coefficient length does not match basis");
    const int s0 = basis.coarse_side();
    MatrixXd A = MatrixXd::Zero(n, n);
    Eigen::Index pos = 0;
    for (int r = 0; r < s0; ++r)
        for (int c = 0; c < s0; ++c) A(r, c) = coeffs[pos++];
    for (int s = s0; s < n; s *= 2) {
        for (int r = 0; r < s; ++r)
            for (int c = 0; c < s; ++c) A(r, c + s) = coeffs[pos++];
        for (int r = 0; r < s; ++r)
            for (int c = 0; c < s; ++c) A(r + s, c) = coeffs[pos++];
        for (int r = 0; r < s; ++r)
            for (int c = 0; c < s; ++c) A(r + s, c + s) = coeffs[pos++];
    }
    std::vector<double> buf(static_cast<std::size_t>(n)), lo(static_cast<std::size_t>(n / 2)),
        hi(static_cast<std::size_t>(n / 2));
    for (int cur = 2 * s0; cur <= n; cur *= 2) {
        const int half = cur / 2;
        for (int c = 0; c < cur; ++c) { // columns first (adjoint order)
            for (int r = 0; r < half; ++r) { lo[static_cast<std::size_t>(r)] = A(r, c); hi[static_cast<std::size_t>(r)] = A(r + half, c); }
            detail::periodic_synthesis(lo, hi, cur, basis.lowpass, basis.highpass, buf);
            for (int r = 0; r < cur; ++r) A(r, c) = buf[static_cast<std::size_t>(r)];
        }
        for (int r = 0; r < cur; ++r) {
            for (int c = 0; c < half; ++c) { lo[static_cast<std::size_t>(c)] = A(r, c); hi[static_cast<std::size_t>(c)] = A(r, c + half); }
            detail::periodic_synthesis(lo, hi, cur, basis.lowpass, basis.highpass, buf);
            for (int c = 0; c < cur; ++c) A(r, c) = buf[static_cast<std::size_t>(c)];
        }
    }
    return Image2D::from_matrix(A);
}

} // namespace soir
