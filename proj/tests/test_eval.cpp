#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

#include "oracles.h"
#include "svmorph/errors.h"
#include "svmorph/eval.h"

using namespace svmorph;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::uint64_t rng = seed;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = oracles::normal(rng);
    return m;
}

Eigen::VectorXd to_vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

} // namespace

TEST_CASE("kfold_split sizes and determinism") {
    const FoldAssignment even = kfold_split(50, 25, 7);
    std::map<int, int> sizes;
    for (int f : even.fold_of) ++sizes[f];
    CHECK(sizes.size() == 25);
    for (const auto& [fold, size] : sizes) CHECK(size == 2);

    // 721 = 25*28 + 21: twenty-one folds of 29 and four folds of 28.
    const FoldAssignment uneven = kfold_split(721, 25, 7);
    std::map<int, int> counts;
    for (int f : uneven.fold_of) ++counts[f];
    int of29 = 0, of28 = 0;
    for (const auto& [fold, size] : counts) {
        if (size == 29) ++of29;
        if (size == 28) ++of28;
    }
    CHECK(of29 == 21);
    CHECK(of28 == 4);

    CHECK(kfold_split(100, 10, 3).fold_of == kfold_split(100, 10, 3).fold_of);
    CHECK(kfold_split(100, 10, 3).fold_of != kfold_split(100, 10, 4).fold_of);
    CHECK_THROWS_AS(kfold_split(10, 11, 0), DataError);
}

TEST_CASE("metric examples") {
    const Eigen::VectorXd y = to_vec({1, 2, 3, 4});
    CHECK(mae(y, y) == doctest::Approx(0.0));
    CHECK(r2(y, y) == doctest::Approx(1.0));
    CHECK(spearman(y, y) == doctest::Approx(1.0));

    const Eigen::VectorXd mean_pred = Eigen::VectorXd::Constant(4, y.mean());
    CHECK(r2(y, mean_pred) == doctest::Approx(0.0));

    // Frozen from the independent rank-correlation oracle.
    const Eigen::VectorXd yhat = to_vec({2, 1, 4, 3});
    const double want = oracles::spearman({1, 2, 3, 4}, {2, 1, 4, 3});
    CHECK(want == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(spearman(y, yhat) == doctest::Approx(want).epsilon(1e-12));

    CHECK_THROWS_AS(r2(Eigen::VectorXd::Constant(3, 1.0), to_vec({1, 2, 3})), NumericError);
}

TEST_CASE("spearman handles ties with mid-ranks and survives monotone transforms") {
    const Eigen::VectorXd y = to_vec({1, 2, 2, 3, 5});
    const Eigen::VectorXd x = to_vec({0.4, -1.0, 2.2, 3.0, 3.1});
    const double base = spearman(y, x);
    CHECK(base ==
          doctest::Approx(oracles::spearman({1, 2, 2, 3, 5}, {0.4, -1.0, 2.2, 3.0, 3.1}))
              .epsilon(1e-12));

    Eigen::VectorXd y_exp = y;
    for (Eigen::Index i = 0; i < y.size(); ++i) y_exp(i) = std::exp(y(i));
    Eigen::VectorXd x_cube = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) x_cube(i) = x(i) * x(i) * x(i) + 10.0;
    CHECK(spearman(y_exp, x_cube) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("pearson examples and oracle agreement") {
    CHECK(pearson(to_vec({1, 2, 3}), to_vec({1, 2, 3})) == doctest::Approx(1.0));
    CHECK(pearson(to_vec({1, 2, 3}), to_vec({3, 2, 1})) == doctest::Approx(-1.0));

    std::uint64_t rng = 2222;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 5 + static_cast<int>(oracles::uniform(rng, 0.0, 50.0));
        std::vector<double> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
        Eigen::VectorXd av(n), bv(n);
        for (int i = 0; i < n; ++i) {
            a[static_cast<std::size_t>(i)] = oracles::normal(rng);
            b[static_cast<std::size_t>(i)] =
                0.3 * a[static_cast<std::size_t>(i)] + oracles::normal(rng);
            av(i) = a[static_cast<std::size_t>(i)];
            bv(i) = b[static_cast<std::size_t>(i)];
        }
        CHECK(std::abs(pearson(av, bv) - oracles::pearson(a, b)) < 1e-12);
    }
}

TEST_CASE("correlation_study shape and undefined entries") {
    const Eigen::VectorXd a = to_vec({1, 2, 3, 4});
    const Eigen::VectorXd b = to_vec({2, 1, 4, 3});
    const Eigen::VectorXd constant = Eigen::VectorXd::Constant(4, 5.0);
    const CorrelationStudy study = correlation_study({"a", "b", "const"}, {a, b, constant});
    CHECK(study.matrix(0, 0) == doctest::Approx(1.0));
    CHECK(study.matrix(0, 1) == doctest::Approx(study.matrix(1, 0)));
    CHECK(std::isnan(study.matrix(0, 2)));
    CHECK(std::isnan(study.matrix(2, 1)));
}

TEST_CASE("fisher_z_test basics, symmetry, and the Bonferroni flag") {
    const FisherTest equal = fisher_z_test(0.4, 0.4, 100);
    CHECK(equal.z == doctest::Approx(0.0));
    CHECK(equal.p == doctest::Approx(1.0));
    CHECK_FALSE(equal.significant);

    const FisherTest ab = fisher_z_test(0.653, 0.919, 721);
    const FisherTest ba = fisher_z_test(0.919, 0.653, 721);
    CHECK(ab.z == doctest::Approx(-ba.z).epsilon(1e-12));
    CHECK(ab.p == doctest::Approx(ba.p).epsilon(1e-12));
    CHECK(ab.significant);

    // The flag is exactly p < 0.05/18.
    for (double rho2 : {0.45, 0.5, 0.52, 0.55, 0.6}) {
        const FisherTest t = fisher_z_test(0.4, rho2, 300);
        CHECK(t.significant == (t.p < 0.05 / 18.0));
    }

    CHECK_THROWS_AS(fisher_z_test(1.0, 0.2, 100), NumericError);
    CHECK_THROWS_AS(fisher_z_test(0.1, 0.2, 3), NumericError);
}

TEST_CASE("fisher_z_test p-values match the high-precision erf oracle") {
    std::uint64_t rng = 909;
    for (int trial = 0; trial < 100; ++trial) {
        const double rho1 = oracles::uniform(rng, -0.95, 0.95);
        const double rho2 = oracles::uniform(rng, -0.95, 0.95);
        const int n = 10 + static_cast<int>(oracles::uniform(rng, 0.0, 1000.0));
        const FisherTest t = fisher_z_test(rho1, rho2, n);
        const long double z = (std::atanh((long double)rho1) - std::atanh((long double)rho2)) /
                              std::sqrt(2.0L / (n - 3));
        CHECK(std::abs(t.p - (double)oracles::normal_two_sided_p(z)) < 1e-10);
    }
}

TEST_CASE("qc_filter examples and monotonicity") {
    // All-equal errors: zero IQR, nobody removed.
    Eigen::MatrixXd equal = Eigen::MatrixXd::Constant(10, 5, 0.7);
    const auto keep_all = qc_filter(equal);
    for (bool k : keep_all) CHECK(k);

    // One subject with 100x the median LVV error is removed.
    std::uint64_t rng = 5005;
    Eigen::MatrixXd errors(40, 5);
    for (Eigen::Index r = 0; r < errors.rows(); ++r)
        for (Eigen::Index c = 0; c < errors.cols(); ++c)
            errors(r, c) = std::abs(oracles::normal(rng)) + 0.5;
    errors(17, 0) *= 100.0;
    const auto keep = qc_filter(errors);
    CHECK_FALSE(keep[17]);

    // Verify against the quartile oracle, column by column.
    for (Eigen::Index c = 0; c < errors.cols(); ++c) {
        std::vector<double> col(static_cast<std::size_t>(errors.rows()));
        for (Eigen::Index r = 0; r < errors.rows(); ++r)
            col[static_cast<std::size_t>(r)] = errors(r, c);
        const double q1 = oracles::quantile_linear(col, 0.25);
        const double q3 = oracles::quantile_linear(col, 0.75);
        const double fence = q3 + 1.5 * (q3 - q1);
        for (Eigen::Index r = 0; r < errors.rows(); ++r)
            if (errors(r, c) > fence) CHECK_FALSE(keep[static_cast<std::size_t>(r)]);
    }

    // Inflating an already-outlying error further changes nothing: the value
    // sits above Q3, so the column's quartiles and fences are rank-stable.
    Eigen::MatrixXd inflated = errors;
    inflated(17, 0) *= 10.0;
    const auto keep2 = qc_filter(inflated);
    CHECK(keep2 == keep);
}

TEST_CASE("cross_validate recovers a noiseless linear target") {
    const Eigen::MatrixXd x = random_matrix(100, 6, 33);
    const Eigen::VectorXd y = x * random_matrix(6, 1, 34);

    PipelineConfig config;
    config.clip_level = 1e6;
    config.n_components = 6;
    const FoldAssignment folds = kfold_split(100, 25, 11);
    const CvResult cv = cross_validate(x, y, config, folds);
    CHECK(cv.report.pooled.r2 > 0.999);
    CHECK(cv.report.pooled.mae < 1e-6 * (y.maxCoeff() - y.minCoeff()) + 1e-9);

    // Every subject is predicted exactly once (all finite, fold coverage).
    std::map<int, int> fold_sizes;
    for (int f : cv.fold_of) ++fold_sizes[f];
    CHECK(fold_sizes.size() == 25);
}

TEST_CASE("cross_validate stays at chance for a pure-noise target") {
    const Eigen::MatrixXd x = random_matrix(500, 20, 35);
    const Eigen::VectorXd y = random_matrix(500, 1, 36); // independent of x

    PipelineConfig config;
    config.clip_level = 3.0;
    config.n_components = 20;
    const FoldAssignment folds = kfold_split(500, 25, 19);
    const CvResult cv = cross_validate(x, y, config, folds);
    CHECK(cv.report.pooled.r2 <= 0.05);
}

TEST_CASE("cross_validate metrics are independent of subject order") {
    const Eigen::MatrixXd x = random_matrix(60, 5, 41);
    const Eigen::VectorXd y =
        x * random_matrix(5, 1, 42) + 0.5 * random_matrix(60, 1, 43);

    PipelineConfig config;
    config.clip_level = 3.0;
    config.n_components = 5;
    const FoldAssignment folds = kfold_split(60, 10, 5);
    const CvResult base = cross_validate(x, y, config, folds);

    // Permute rows and carry the fold assignment along.
    std::vector<Eigen::Index> perm(60);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    Eigen::MatrixXd xp(60, 5);
    Eigen::VectorXd yp(60);
    FoldAssignment fp = folds;
    for (Eigen::Index i = 0; i < 60; ++i) {
        xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
        yp(i) = y(perm[static_cast<std::size_t>(i)]);
        fp.fold_of[static_cast<std::size_t>(i)] =
            folds.fold_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    const CvResult permuted = cross_validate(xp, yp, config, fp);
    CHECK(permuted.report.pooled.r2 == doctest::Approx(base.report.pooled.r2).epsilon(1e-12));
    CHECK(permuted.report.pooled.mae == doctest::Approx(base.report.pooled.mae).epsilon(1e-12));
}

TEST_CASE("no leakage: corrupting a validation fold leaves its model unchanged") {
    const Eigen::MatrixXd x = random_matrix(48, 6, 51);
    Eigen::VectorXd y = x * random_matrix(6, 1, 52) + 0.2 * random_matrix(48, 1, 53);

    PipelineConfig config;
    config.clip_level = 2.0;
    config.n_components = 6;
    const FoldAssignment folds = kfold_split(48, 8, 3);

    std::vector<TrainedPipeline> models;
    cross_validate(x, y, config, folds, 1, &models);

    Eigen::VectorXd corrupted = y;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (folds.fold_of[static_cast<std::size_t>(i)] == 0) corrupted(i) = 1e9;

    std::vector<TrainedPipeline> models2;
    cross_validate(x, corrupted, config, folds, 1, &models2);
    CHECK(pipeline_to_bytes(models[0]) == pipeline_to_bytes(models2[0]));
}

TEST_CASE("cross_validate fold results are thread-count independent") {
    const Eigen::MatrixXd x = random_matrix(50, 5, 61);
    const Eigen::VectorXd y = x * random_matrix(5, 1, 62) + random_matrix(50, 1, 63);
    PipelineConfig config;
    config.n_components = 5;
    const FoldAssignment folds = kfold_split(50, 10, 17);
    const CvResult a = cross_validate(x, y, config, folds, 1);
    const CvResult b = cross_validate(x, y, config, folds, 4);
    CHECK(a.predictions == b.predictions);
}

TEST_CASE("ablation_sweep: single value equals a plain run; clip sweep is flat on clean data") {
    // Balanced +-1 features keep every z-score magnitude at ~1 or below, so
    // clipping is inactive for the whole c >= 1 sweep.
    std::uint64_t rng = 71;
    Eigen::MatrixXd x(80, 6);
    for (Eigen::Index c = 0; c < 6; ++c) {
        for (Eigen::Index r = 0; r < 80; ++r) x(r, c) = r < 40 ? 1.0 : -1.0;
        for (Eigen::Index r = 79; r > 0; --r) {
            const auto j = static_cast<Eigen::Index>(oracles::uniform(rng, 0.0, double(r) + 1.0));
            std::swap(x(r, c), x(j, c));
        }
    }
    const Eigen::VectorXd y = x * random_matrix(6, 1, 72);

    PipelineConfig config;
    config.clip_level = 3.0;
    config.n_components = 6;
    const FoldAssignment folds = kfold_split(80, 10, 23);
    const DatasetProvider same = [&](const std::string&) { return std::make_pair(x, y); };

    const auto single = ablation_sweep(AblationAxis::ClipLevel, {"3"}, config, folds, same);
    const CvResult plain = cross_validate(x, y, config, folds);
    CHECK(single.size() == 1);
    CHECK(single[0].pooled.r2 == doctest::Approx(plain.report.pooled.r2).epsilon(1e-12));

    std::vector<std::string> clips;
    for (double c : {1.0, 2.0, 3.0, 4.0, 5.0}) clips.push_back(std::to_string(c));
    const auto rows = ablation_sweep(AblationAxis::ClipLevel, clips, config, folds, same);
    double lo = 1.0, hi = -1.0;
    for (const auto& row : rows) {
        lo = std::min(lo, row.pooled.r2);
        hi = std::max(hi, row.pooled.r2);
    }
    CHECK(hi - lo < 0.01); // clipping inactive once c >= 1
}

TEST_CASE("ablation_sweep: components saturate on rank-2 data") {
    // x has rank-2 signal structure; y depends on the two factors.
    const Eigen::MatrixXd factors = random_matrix(90, 2, 81);
    const Eigen::MatrixXd loadings = random_matrix(2, 12, 82);
    const Eigen::MatrixXd x = factors * loadings;
    const Eigen::VectorXd y = factors.col(0) - 0.5 * factors.col(1);

    PipelineConfig config;
    config.clip_level = 1e6;
    const FoldAssignment folds = kfold_split(90, 9, 29);
    const DatasetProvider same = [&](const std::string&) { return std::make_pair(x, y); };
    const auto rows =
        ablation_sweep(AblationAxis::NComponents, {"1", "2", "4", "8"}, config, folds, same);
    CHECK(rows[1].pooled.r2 > 0.999);                                  // saturated at 2
    CHECK(rows[2].pooled.r2 == doctest::Approx(rows[1].pooled.r2).epsilon(1e-6));
    CHECK(rows[3].pooled.r2 == doctest::Approx(rows[1].pooled.r2).epsilon(1e-6));
    CHECK(rows[0].pooled.r2 < rows[1].pooled.r2 - 0.01); // one component is not enough
}

TEST_CASE("ablation default grids match the sweep specification") {
    CHECK(ablation_default_values(AblationAxis::GridSize).size() == 16);   // 10..25
    CHECK(ablation_default_values(AblationAxis::ClipLevel).size() == 20);  // 0.25..5.0
    CHECK(ablation_default_values(AblationAxis::NComponents).size() == 12); // 50..600
    CHECK(ablation_default_values(AblationAxis::FeatureSubset).size() == 9);
    CHECK(ablation_default_values(AblationAxis::ClipLevel).front() == "0.25");
    CHECK(ablation_default_values(AblationAxis::ClipLevel).back() == "5");
}
