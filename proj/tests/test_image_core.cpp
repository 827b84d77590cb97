#include <catch2/catch.hpp>

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>

#include "soir/image.hpp"
#include "soir/io.hpp"
#include "soir/neighborhood.hpp"
#include "soir/rng.hpp"

using namespace soir;

namespace {

RegressionDataset tiny_dataset(int N, int nx, int ny, std::uint64_t seed) {
    Rng rng(seed);
    MatrixXd X(N, nx * ny);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = rng.normal();
    VectorXd y(N);
    for (int i = 0; i < N; ++i) y[i] = rng.normal();
    return make_dataset(y, MatrixXd::Ones(N, 1), X, nx, ny);
}

} // namespace

TEST_CASE("Image2D validates its invariants") {
    CHECK_THROWS_AS(Image2D(1, 4, VectorXd::Zero(4)), std::invalid_argument);
    CHECK_THROWS_AS(Image2D(2, 2, VectorXd::Zero(3)), std::invalid_argument);
    VectorXd bad(4);
    bad << 1.0, 2.0, std::numeric_limits<double>::quiet_NaN(), 0.0;
    CHECK_THROWS_AS(Image2D(2, 2, bad), std::invalid_argument);

    Image2D img(3, 2, (VectorXd(6) << 0, 1, 2, 3, 4, 5).finished());
    CHECK(img(2, 0) == 2.0);  // row-major: (ix, iy) at iy*nx + ix
    CHECK(img(0, 1) == 3.0);
    CHECK(Image2D::from_matrix(img.as_matrix()).values() == img.values());
}

TEST_CASE("demean_images removes pixel means and stores them") {
    SECTION("constant column becomes zero with mean stored") {
        RegressionDataset d = tiny_dataset(5, 2, 2, 1);
        d.X.col(2).setConstant(7.5);
        const RegressionDataset out = demean_images(d);
        CHECK(out.X.col(2).cwiseAbs().maxCoeff() == Approx(0.0).margin(1e-12));
        CHECK(out.pixel_means[2] == Approx(7.5));
        CHECK(out.y == d.y);
        CHECK(out.W == d.W);
    }
    SECTION("hand-computed two-row column") {
        RegressionDataset d = tiny_dataset(2, 2, 2, 2);
        d.X.col(0) << 1.0, 3.0;
        const RegressionDataset out = demean_images(d);
        CHECK(out.X(0, 0) == Approx(-1.0));
        CHECK(out.X(1, 0) == Approx(1.0));
        CHECK(out.pixel_means[0] == Approx(2.0));
    }
    SECTION("demeaning twice is rejected") {
        const RegressionDataset out = demean_images(tiny_dataset(4, 2, 2, 3));
        CHECK_THROWS_AS(demean_images(out), std::invalid_argument);
    }
    SECTION("columns sum to zero within tolerance") {
        const RegressionDataset out = demean_images(tiny_dataset(23, 4, 3, 4));
        for (Eigen::Index j = 0; j < out.l(); ++j)
            CHECK(std::abs(out.X.col(j).sum()) < 1e-9 * static_cast<double>(out.n()));
    }
}

TEST_CASE("relative_estimation_error matches its definition") {
    const VectorXd truth = (VectorXd(2) << 0.0, 2.0).finished();
    CHECK(relative_estimation_error(truth, truth) == Approx(0.0));
    const VectorXd mean_image = VectorXd::Constant(2, 1.0);
    CHECK(relative_estimation_error(truth, mean_image) == Approx(1.0));
    const VectorXd est = (VectorXd(2) << 1.0, 1.0).finished();
    CHECK(relative_estimation_error(truth, est) == Approx(1.0)); // (1+1)/(1+1)
    CHECK_THROWS_AS(relative_estimation_error(VectorXd::Constant(3, 2.0), VectorXd::Zero(3)),
                    DegenerateInputError);
}

TEST_CASE("relative_estimation_error shift behaviour") {
    Rng rng(5);
    VectorXd truth(6), est(6);
    for (int i = 0; i < 6; ++i) { truth[i] = rng.normal(); est[i] = rng.normal(); }
    const double base = relative_estimation_error(truth, est);
    // simultaneous shifts leave the error unchanged, one-sided shifts do not
    const VectorXd c = VectorXd::Constant(6, 0.37);
    CHECK(relative_estimation_error(truth + c, est + c) == Approx(base));
    CHECK(relative_estimation_error(truth, est + c) != Approx(base).epsilon(1e-6));
}

TEST_CASE("relative_prediction_error matches its definition") {
    const VectorXd y = (VectorXd(2) << 0.0, 2.0).finished();
    CHECK(relative_prediction_error(y, y) == Approx(0.0));
    CHECK(relative_prediction_error(y, VectorXd::Constant(2, 1.0)) == Approx(1.0));
    const VectorXd yhat = (VectorXd(2) << 1.0, 2.0).finished();
    CHECK(relative_prediction_error(y, yhat) == Approx(0.5));
    CHECK_THROWS_AS(relative_prediction_error(VectorXd::Constant(4, 1.0), VectorXd::Zero(4)),
                    DegenerateInputError);
}

TEST_CASE("image_correlation is Pearson correlation of pixels") {
    const VectorXd a = (VectorXd(4) << 1, 2, 3, 4).finished();
    CHECK(image_correlation(a, a) == Approx(1.0));
    CHECK(image_correlation(a, VectorXd(-a)) == Approx(-1.0));
    const VectorXd b = (VectorXd(4) << 1, 2, 4, 3).finished();
    CHECK(image_correlation(a, b) == Approx(0.8));
    CHECK_THROWS_AS(image_correlation(a, VectorXd::Constant(4, 2.0)), DegenerateInputError);
}

TEST_CASE("image_correlation is invariant under positive affine maps") {
    Rng rng(6);
    VectorXd a(12), b(12);
    for (int i = 0; i < 12; ++i) { a[i] = rng.normal(); b[i] = rng.normal(); }
    const double base = image_correlation(a, b);
    for (int trial = 0; trial < 10; ++trial) {
        const double scale = 0.1 + 5.0 * rng.uniform();
        const double shift = rng.normal();
        CHECK(image_correlation(VectorXd(scale * a.array() + shift), b) == Approx(base).margin(1e-12));
    }
}

TEST_CASE("build_neighborhood gives the 4-neighbour grid Laplacian") {
    SECTION("2x2: every pixel has two neighbours, rows sum to zero") {
        const NeighborhoodMatrix nb = build_neighborhood(2, 2);
        for (Eigen::Index l = 0; l < 4; ++l) CHECK(nb.degree(l) == 2);
        const MatrixXd P = nb.dense();
        CHECK(P.rowwise().sum().cwiseAbs().maxCoeff() == Approx(0.0).margin(1e-14));
        CHECK(P == P.transpose());
    }
    SECTION("3x3 degrees") {
        const NeighborhoodMatrix nb = build_neighborhood(3, 3);
        CHECK(nb.degree(4) == 4); // center
        CHECK(nb.degree(0) == 2);
        CHECK(nb.degree(2) == 2);
        CHECK(nb.degree(1) == 3); // edge
    }
    SECTION("lambda_max matches the dense eigendecomposition") {
        for (const auto [nx, ny] : {std::pair{2, 2}, std::pair{3, 4}, std::pair{5, 3}}) {
            const NeighborhoodMatrix nb = build_neighborhood(nx, ny);
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(nb.dense(), Eigen::EigenvaluesOnly);
            CHECK(nb.lambda_max() == Approx(es.eigenvalues().maxCoeff()).margin(1e-10));
        }
        CHECK(build_neighborhood(2, 2).lambda_max() == Approx(4.0));
    }
    SECTION("quadratic form equals the neighbour-pair enumeration") {
        Rng rng(7);
        for (int nx = 2; nx <= 5; ++nx) {
            for (int ny = 2; ny <= 5; ++ny) {
                const NeighborhoodMatrix nb = build_neighborhood(nx, ny);
                VectorXd beta(nb.size());
                for (Eigen::Index l = 0; l < beta.size(); ++l) beta[l] = rng.normal();
                double direct = 0.0;
                for (int iy = 0; iy < ny; ++iy)
                    for (int ix = 0; ix < nx; ++ix) {
                        const Eigen::Index l = iy * nx + ix;
                        if (ix + 1 < nx) direct += std::pow(beta[l] - beta[l + 1], 2);
                        if (iy + 1 < ny) direct += std::pow(beta[l] - beta[l + nx], 2);
                    }
                CHECK(nb.quad_form(beta) == Approx(direct).margin(1e-10));
                CHECK(nb.quad_form(beta) == Approx(beta.dot(nb.dense() * beta)).margin(1e-8));
                CHECK(nb.multiply(VectorXd::Ones(nb.size())).cwiseAbs().maxCoeff() ==
                      Approx(0.0).margin(1e-14));
            }
        }
    }
    CHECK_THROWS_AS(build_neighborhood(1, 5), std::invalid_argument);
}

TEST_CASE("binary container and CSV image round trips") {
    namespace fs = std::filesystem;
    const std::string dir = std::string(SOIR_TEST_TMP) + "/io";
    fs::create_directories(dir);
    Rng rng(8);
    VectorXd v(12);
    for (int i = 0; i < 12; ++i) v[i] = rng.normal();
    const Image2D img(4, 3, v);

    SECTION("soir container") {
        write_soir_image(dir + "/img.soir", img);
        const Image2D back = read_soir_image(dir + "/img.soir");
        CHECK(back.nx() == 4);
        CHECK(back.ny() == 3);
        CHECK((back.values() - img.values()).cwiseAbs().maxCoeff() == 0.0);
        // header is exactly 16 bytes + payload
        CHECK(fs::file_size(dir + "/img.soir") == 16 + 12 * sizeof(double));
    }
    SECTION("csv") {
        write_csv_image(dir + "/img.csv", img);
        const Image2D back = read_csv_image(dir + "/img.csv");
        CHECK((back.values() - img.values()).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("bad magic is rejected") {
        std::ofstream out(dir + "/bad.soir", std::ios::binary);
        out << "NOPE            ";
        out.close();
        CHECK_THROWS(read_soir_image(dir + "/bad.soir"));
    }
    SECTION("non-numeric csv is rejected") {
        std::ofstream out(dir + "/bad.csv");
        out << "1,2\n3,nanana\n";
        out.close();
        CHECK_THROWS(read_csv_image(dir + "/bad.csv"));
    }
}
