#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "oracles.h"
#include "svmorph/errors.h"
#include "svmorph/model.h"

using namespace svmorph;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::uint64_t rng = seed;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = oracles::normal(rng);
    return m;
}

} // namespace

TEST_CASE("fit_standardizer: sample statistics and the constant-feature rule") {
    Eigen::MatrixXd x(2, 2);
    x << 0, 5, 2, 5;
    Eigen::VectorXd y(2);
    y << 1, 3;
    const Standardizer s = fit_standardizer(x, y, 1.0);
    CHECK(s.feature_mean(0) == doctest::Approx(1.0));
    CHECK(s.feature_std(0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    CHECK(s.feature_std(1) == doctest::Approx(1.0)); // constant column stored as 1

    const Eigen::MatrixXd z = apply_standardizer(x, s);
    CHECK(z(0, 1) == doctest::Approx(0.0)); // constant feature z-scores to 0
    CHECK(z(1, 1) == doctest::Approx(0.0));

    CHECK_THROWS_AS(fit_standardizer(x.topRows(1), y.head(1), 1.0), DataError);
}

TEST_CASE("fit_standardizer matches brute-force statistics on random data") {
    const Eigen::MatrixXd x = random_matrix(37, 5, 404);
    const Eigen::VectorXd y = random_matrix(37, 1, 405);
    const Standardizer s = fit_standardizer(x, y, 2.0);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        double mean = 0.0;
        for (Eigen::Index r = 0; r < x.rows(); ++r) mean += x(r, c);
        mean /= static_cast<double>(x.rows());
        double ss = 0.0;
        for (Eigen::Index r = 0; r < x.rows(); ++r) ss += (x(r, c) - mean) * (x(r, c) - mean);
        const double sd = std::sqrt(ss / static_cast<double>(x.rows() - 1));
        CHECK(s.feature_mean(c) == doctest::Approx(mean).epsilon(1e-12));
        CHECK(s.feature_std(c) == doctest::Approx(sd).epsilon(1e-12));
    }
}

TEST_CASE("apply_standardizer clipping") {
    Eigen::MatrixXd train(3, 1);
    train << -1, 0, 1;
    Eigen::VectorXd y(3);
    y << 0, 1, 2;
    Standardizer s = fit_standardizer(train, y, 1.0);
    s.feature_mean(0) = 0.0;
    s.feature_std(0) = 1.0;

    Eigen::MatrixXd x(1, 1);
    x << 2.5;
    CHECK(apply_standardizer(x, s)(0, 0) == doctest::Approx(1.0)); // clipped at c=1
    s.clip_level = 3.0;
    CHECK(apply_standardizer(x, s)(0, 0) == doctest::Approx(2.5)); // inside the band
    x(0, 0) = s.feature_mean(0);
    CHECK(apply_standardizer(x, s)(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("fit_pca: collinear data and full-rank reconstruction") {
    // Points on the line y = x.
    Eigen::MatrixXd x(5, 2);
    x << -2, -2, -1, -1, 0, 0, 1, 1, 2, 2;
    const PcaModel m = fit_pca(x, 2);
    CHECK(std::abs(m.components(0, 0)) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(m.components(0, 0) == doctest::Approx(m.components(0, 1)).epsilon(1e-12));
    CHECK(m.components(0, 0) > 0.0); // sign convention
    CHECK(m.explained_variance(1) == doctest::Approx(0.0).epsilon(1e-12));

    const Eigen::MatrixXd z = random_matrix(12, 7, 99);
    const PcaModel full = fit_pca(z, 7);
    const Eigen::MatrixXd rec = pca_inverse_transform(pca_transform(z, full), full);
    CHECK((rec - z).cwiseAbs().maxCoeff() < 1e-8);

    CHECK_THROWS_AS(fit_pca(z, 13), ConfigError);
}

TEST_CASE("fit_pca matches the covariance eigendecomposition oracle") {
    const Eigen::MatrixXd x = random_matrix(50, 20, 7777);
    const int k = 5;
    const PcaModel m = fit_pca(x, k);
    const Eigen::MatrixXd want = oracles::pca_top_components(x, k);
    CHECK(oracles::max_principal_angle(m.components, want) < 1e-6);

    // Orthonormal rows and non-increasing explained variances.
    const Eigen::MatrixXd gram = m.components * m.components.transpose();
    CHECK((gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-8);
    for (int i = 1; i < k; ++i) CHECK(m.explained_variance(i) <= m.explained_variance(i - 1) + 1e-12);
}

TEST_CASE("incremental pca spans the same subspace as exact pca") {
    // A decisive spectrum: k strong factors over small isotropic noise. The
    // incremental merge keeps all of the signal subspace, so both routes
    // must agree. (On isotropic data the top-k subspace is not determined
    // and no PCA variant could be expected to match another.)
    const int k = 8;
    Eigen::MatrixXd factors = random_matrix(120, k, 31337);
    for (int c = 0; c < k; ++c) factors.col(c) *= 12.0 - c;
    const Eigen::MatrixXd loadings = random_matrix(k, 30, 31338);
    const Eigen::MatrixXd x = factors * loadings + 1e-4 * random_matrix(120, 30, 31339);

    const PcaModel exact = fit_pca(x, k);
    const PcaModel inc = fit_pca_incremental(x, k, 30);
    CHECK(oracles::max_principal_angle(exact.components, inc.components) < 1e-4);
    CHECK((exact.mean - inc.mean).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("pca_transform basics") {
    const Eigen::MatrixXd z = random_matrix(20, 6, 555);
    const PcaModel m = fit_pca(z, 4);

    Eigen::MatrixXd mean_row = m.mean.transpose();
    CHECK(pca_transform(mean_row, m).cwiseAbs().maxCoeff() < 1e-12);

    // Scores on held-out rows match a direct matrix product.
    const Eigen::MatrixXd held = random_matrix(9, 6, 556);
    const Eigen::MatrixXd got = pca_transform(held, m);
    for (Eigen::Index r = 0; r < held.rows(); ++r)
        for (int c = 0; c < 4; ++c) {
            double acc = 0.0;
            for (int f = 0; f < 6; ++f) acc += (held(r, f) - m.mean(f)) * m.components(c, f);
            CHECK(got(r, c) == doctest::Approx(acc).epsilon(1e-12));
        }

    // Training scores have diagonal covariance.
    const Eigen::MatrixXd scores = pca_transform(z, m);
    const Eigen::MatrixXd centered = scores.rowwise() - scores.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / double(z.rows() - 1);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (i != j) CHECK(std::abs(cov(i, j)) < 1e-6);
}

TEST_CASE("fit_ols exact cases") {
    Eigen::MatrixXd x(6, 2);
    x << 1, 0.3, 2, -0.1, 3, 0.2, 4, 0.9, 5, -0.5, 6, 0.0;
    Eigen::VectorXd y = 2.0 * x.col(0);
    const LinearModel m = fit_ols(x, y);
    CHECK(m.coefficients(0) == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(m.coefficients(1) == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(m.intercept == doctest::Approx(0.0).epsilon(1e-10));
    CHECK_FALSE(m.rank_deficient);

    const Eigen::VectorXd yc = Eigen::VectorXd::Constant(6, 3.25);
    const LinearModel c = fit_ols(x, yc);
    CHECK(c.coefficients.cwiseAbs().maxCoeff() < 1e-10);
    CHECK(c.intercept == doctest::Approx(3.25));
}

TEST_CASE("fit_ols matches the normal-equations oracle and residuals are orthogonal") {
    const Eigen::MatrixXd x = random_matrix(100, 10, 4242);
    Eigen::VectorXd y = random_matrix(100, 1, 4243);
    const LinearModel m = fit_ols(x, y);
    const auto want = oracles::ols_normal_equations(x, y);
    CHECK((m.coefficients - want.coefficients).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(m.intercept == doctest::Approx(want.intercept).epsilon(1e-8));

    const Eigen::VectorXd residuals = y - linear_predict(m, x);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double dot = std::abs(residuals.dot(x.col(c)));
        CHECK(dot < 1e-6 * residuals.norm() * x.col(c).norm() + 1e-9);
    }
}

TEST_CASE("fit_ols flags rank deficiency and returns the minimum-norm solution") {
    Eigen::MatrixXd x(8, 3);
    x.col(0) = random_matrix(8, 1, 12);
    x.col(1) = x.col(0); // duplicate column
    x.col(2) = random_matrix(8, 1, 13);
    const Eigen::VectorXd y = x.col(0) * 3.0;
    const LinearModel m = fit_ols(x, y);
    CHECK(m.rank_deficient);
    // Minimum-norm splits the weight across the duplicated columns.
    CHECK(m.coefficients(0) == doctest::Approx(1.5).epsilon(1e-8));
    CHECK(m.coefficients(1) == doctest::Approx(1.5).epsilon(1e-8));
    CHECK((y - linear_predict(m, x)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("pipeline: exact fit, intercept behavior, serialization") {
    const Eigen::MatrixXd x = random_matrix(30, 4, 818);
    const Eigen::VectorXd y = x.col(2);

    PipelineConfig config;
    config.clip_level = 1e6;
    config.n_components = 4;
    const TrainedPipeline p = fit_pipeline(x, y, config);
    CHECK((predict(p, x) - y).cwiseAbs().maxCoeff() < 1e-6);

    // All-mean input row predicts the intercept in original units.
    Eigen::MatrixXd mean_row = p.standardizer.feature_mean.transpose();
    const double got = predict(p, mean_row)(0);
    CHECK(got == doctest::Approx(y.mean()).epsilon(1e-6));

    const std::string path =
        (std::filesystem::temp_directory_path() / "svmorph_pipe.bin").string();
    save_pipeline(p, path);
    const TrainedPipeline back = load_pipeline(path);
    CHECK(pipeline_to_bytes(back) == pipeline_to_bytes(p));
    CHECK((predict(back, x) - predict(p, x)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pipeline predictions are invariant to affine rescaling of one column") {
    const Eigen::MatrixXd x = random_matrix(40, 5, 246);
    const Eigen::VectorXd y = random_matrix(40, 1, 247);

    PipelineConfig config;
    config.clip_level = 2.0;
    config.n_components = 5;
    const TrainedPipeline p1 = fit_pipeline(x, y, config);

    Eigen::MatrixXd x2 = x;
    x2.col(3) = 7.0 * x.col(3).array() - 11.0;
    const TrainedPipeline p2 = fit_pipeline(x2, y, config);
    CHECK((predict(p1, x) - predict(p2, x2)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("with huge clip and full components the pipeline equals direct OLS") {
    const Eigen::MatrixXd x = random_matrix(50, 8, 135);
    Eigen::VectorXd y = x * random_matrix(8, 1, 136) + 0.3 * random_matrix(50, 1, 137);

    PipelineConfig config;
    config.clip_level = 1e6;
    config.n_components = 8;
    const TrainedPipeline p = fit_pipeline(x, y, config);

    // Direct OLS on standardized features, mapped back to original units.
    const Standardizer s = fit_standardizer(x, y, 1e6);
    const Eigen::MatrixXd z = apply_standardizer(x, s);
    const LinearModel direct = fit_ols(z, standardize_target(y, s));
    const Eigen::VectorXd direct_pred =
        (linear_predict(direct, z).array() * s.target_std) + s.target_mean;
    CHECK((predict(p, x) - direct_pred).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("no-pca pipeline path") {
    const Eigen::MatrixXd x = random_matrix(25, 3, 777);
    const Eigen::VectorXd y = x.col(0) - 2.0 * x.col(1);
    PipelineConfig config;
    config.use_pca = false;
    config.clip_level = 1e6;
    const TrainedPipeline p = fit_pipeline(x, y, config);
    CHECK_FALSE(p.has_pca);
    CHECK((predict(p, x) - y).cwiseAbs().maxCoeff() < 1e-6);
}
