#include <catch2/catch.hpp>

#include "soir/projection.hpp"
#include "soir/rng.hpp"
#include "soir/spline_basis.hpp"
#include "soir/wavelet.hpp"

using namespace soir;

TEST_CASE("spline basis rows form a partition of unity") {
    const SplineBasis2D basis = eval_spline_basis(12, 10, 6, 5);
    CHECK((basis.B.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(basis.B.rows() == 120);
    CHECK(basis.B.cols() == 30);
}

TEST_CASE("spline penalty annihilates exactly the bilinear coefficients") {
    const SplineBasis2D basis = eval_spline_basis(8, 8, 4, 4);
    const int Kx = basis.Kx, Ky = basis.Ky;

    SECTION("constant and linear-in-x coefficients have zero penalty") {
        const VectorXd constant = VectorXd::Ones(Kx * Ky);
        CHECK((basis.penalty * constant).cwiseAbs().maxCoeff() < 1e-12);
        VectorXd linear_x(Kx * Ky);
        for (int ky = 0; ky < Ky; ++ky)
            for (int kx = 0; kx < Kx; ++kx) linear_x[ky * Kx + kx] = kx;
        CHECK(linear_x.dot(basis.penalty * linear_x) == Approx(0.0).margin(1e-12));
    }
    SECTION("bilinear coefficients have zero penalty, random ones do not") {
        VectorXd bilinear(Kx * Ky);
        for (int ky = 0; ky < Ky; ++ky)
            for (int kx = 0; kx < Kx; ++kx) bilinear[ky * Kx + kx] = 1.5 - 0.3 * kx + 0.8 * ky + 0.25 * kx * ky;
        CHECK(bilinear.dot(basis.penalty * bilinear) == Approx(0.0).margin(1e-10));
        Rng rng(1);
        VectorXd random(Kx * Ky);
        for (Eigen::Index i = 0; i < random.size(); ++i) random[i] = rng.normal();
        CHECK(random.dot(basis.penalty * random) > 1e-6);
    }
    SECTION("penalty is symmetric PSD") {
        CHECK((basis.penalty - basis.penalty.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(basis.penalty, Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() > -1e-10);
    }
}

TEST_CASE("spline basis rejects unusable shapes") {
    CHECK_THROWS_AS(eval_spline_basis(4, 8, 6, 4), std::invalid_argument); // grid smaller than basis
    CHECK_THROWS_AS(eval_spline_basis(8, 8, 2, 4), std::invalid_argument); // K < order + 1
}

TEST_CASE("wavelet filter satisfies the orthonormality identities") {
    const WaveletBasis2D basis = make_wavelet_basis(32, 3);
    REQUIRE(basis.lowpass.size() == 20);
    double sum = 0.0, norm2 = 0.0;
    for (double h : basis.lowpass) { sum += h; norm2 += h * h; }
    CHECK(sum == Approx(std::sqrt(2.0)).margin(1e-12));
    CHECK(norm2 == Approx(1.0).margin(1e-12));
    for (int k = 1; k < 10; ++k) {
        double dot = 0.0;
        for (int m = 0; m + 2 * k < 20; ++m) dot += basis.lowpass[m] * basis.lowpass[m + 2 * k];
        CHECK(dot == Approx(0.0).margin(1e-12));
    }
    // ten vanishing moments of the highpass filter
    for (int q = 0; q < 10; ++q) {
        double moment = 0.0, scale = 0.0;
        for (int m = 0; m < 20; ++m) {
            moment += basis.highpass[m] * std::pow(m, q);
            scale += std::abs(basis.highpass[m]) * std::pow(m, q);
        }
        CHECK(std::abs(moment) < 1e-8 * (1.0 + scale));
    }
}

TEST_CASE("2D wavelet transform round trip and Parseval") {
    const WaveletBasis2D basis = make_wavelet_basis(32, 3);
    Rng rng(2);

    SECTION("zero image maps to zero coefficients") {
        const VectorXd c = dwt2_forward(Image2D::zero(32, 32), basis);
        CHECK(c.cwiseAbs().maxCoeff() == 0.0);
        CHECK(dwt2_inverse(VectorXd::Zero(32 * 32), basis).values().cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("Parseval and perfect reconstruction on 100 random images") {
        double worst_parseval = 0.0, worst_roundtrip = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            VectorXd v(32 * 32);
            for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
            const Image2D img(32, 32, v);
            const VectorXd c = dwt2_forward(img, basis);
            worst_parseval = std::max(worst_parseval,
                                      std::abs(v.squaredNorm() - c.squaredNorm()) / v.squaredNorm());
            const Image2D back = dwt2_inverse(c, basis);
            worst_roundtrip = std::max(worst_roundtrip, (back.values() - v).cwiseAbs().maxCoeff());
        }
        CHECK(worst_parseval < 1e-10);
        CHECK(worst_roundtrip < 1e-10);
    }
    SECTION("a single unit coefficient reconstructs to a unit-norm atom") {
        for (const Eigen::Index idx : {0L, 70L, 511L, 1023L}) {
            VectorXd c = VectorXd::Zero(32 * 32);
            c[idx] = 1.0;
            const Image2D atom = dwt2_inverse(c, basis);
            CHECK(atom.values().norm() == Approx(1.0).margin(1e-10));
        }
    }
    SECTION("inverse is linear") {
        VectorXd a(32 * 32), b(32 * 32);
        for (Eigen::Index i = 0; i < a.size(); ++i) { a[i] = rng.normal(); b[i] = rng.normal(); }
        const VectorXd sum_img = dwt2_inverse(a + b, basis).values();
        const VectorXd img_sum = dwt2_inverse(a, basis).values() + dwt2_inverse(b, basis).values();
        CHECK((sum_img - img_sum).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("wavelet transform rejects invalid shapes") {
    CHECK_THROWS_AS(make_wavelet_basis(24, 3), std::invalid_argument);
    const WaveletBasis2D basis = make_wavelet_basis(16, 3);
    CHECK_THROWS_AS(dwt2_forward(Image2D::zero(16, 8), basis), std::invalid_argument);
    CHECK_THROWS_AS(dwt2_forward(Image2D::zero(32, 32), basis), std::invalid_argument);
    CHECK_THROWS_AS(dwt2_inverse(VectorXd::Zero(100), basis), std::invalid_argument);
}

TEST_CASE("wavelet m0 caps at the image resolution") {
    const WaveletBasis2D basis = make_wavelet_basis(4, 3);
    CHECK(basis.m0_effective == 2);
    CHECK(basis.levels == 0); // transform degenerates to the identity
    Rng rng(3);
    VectorXd v(16);
    for (int i = 0; i < 16; ++i) v[i] = rng.normal();
    CHECK((dwt2_forward(Image2D(4, 4, v), basis) - v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("project_onto_span computes orthogonal projections") {
    Rng rng(4);
    MatrixXd basis(10, 3);
    for (Eigen::Index i = 0; i < basis.size(); ++i) basis(i / 3, i % 3) = rng.normal();

    SECTION("vector in span has zero residual") {
        const VectorXd beta = basis * (VectorXd(3) << 1.0, -2.0, 0.5).finished();
        const ProjectionResult r = project_onto_span(beta, basis);
        CHECK(r.residual_fraction == Approx(0.0).margin(1e-12));
        CHECK((r.projection - beta).cwiseAbs().maxCoeff() < 1e-10);
    }
    SECTION("vector orthogonal to span has residual one") {
        Eigen::HouseholderQR<MatrixXd> qr(basis);
        const MatrixXd Q = qr.householderQ() * MatrixXd::Identity(10, 3);
        VectorXd v(10);
        for (int i = 0; i < 10; ++i) v[i] = rng.normal();
        const VectorXd orth = v - Q * (Q.transpose() * v);
        const ProjectionResult r = project_onto_span(orth, basis);
        CHECK(r.residual_fraction == Approx(1.0).margin(1e-10));
    }
    SECTION("unit in-span plus unit orthogonal gives one half") {
        Eigen::HouseholderQR<MatrixXd> qr(basis);
        const MatrixXd Q = qr.householderQ() * MatrixXd::Identity(10, 3);
        VectorXd v(10);
        for (int i = 0; i < 10; ++i) v[i] = rng.normal();
        VectorXd w = v - Q * (Q.transpose() * v);
        w /= w.norm();
        const VectorXd u = Q.col(0);
        const ProjectionResult r = project_onto_span(u + w, basis);
        CHECK(r.residual_fraction == Approx(0.5).margin(1e-10));
    }
    SECTION("projection is idempotent") {
        VectorXd v(10);
        for (int i = 0; i < 10; ++i) v[i] = rng.normal();
        const ProjectionResult first = project_onto_span(v, basis);
        const ProjectionResult second = project_onto_span(first.projection, basis);
        CHECK(second.residual_fraction < 1e-12);
    }
    CHECK_THROWS_AS(project_onto_span(VectorXd::Zero(10), basis), DegenerateInputError);
}
