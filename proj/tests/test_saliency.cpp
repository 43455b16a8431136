#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "oracles.h"
#include "svmorph/errors.h"
#include "svmorph/saliency.h"

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

TEST_CASE("compute_saliency passthrough cases") {
    PcaModel identity;
    identity.mean = Eigen::VectorXd::Zero(3);
    identity.components = Eigen::MatrixXd::Identity(3, 3);
    identity.explained_variance = Eigen::VectorXd::Ones(3);

    LinearModel lin;
    lin.coefficients = Eigen::VectorXd::Zero(3);
    lin.coefficients(1) = 1.0;

    const Eigen::VectorXd s = compute_saliency(identity, lin);
    CHECK(s(0) == doctest::Approx(0.0));
    CHECK(s(1) == doctest::Approx(1.0));
    CHECK(s(2) == doctest::Approx(0.0));

    lin.coefficients.setZero();
    const Eigen::VectorXd zero = compute_saliency(identity, lin);
    CHECK(zero.cwiseAbs().maxCoeff() == doctest::Approx(0.0));

    lin.coefficients = Eigen::VectorXd::Zero(2);
    CHECK_THROWS_AS(compute_saliency(identity, lin), DataError);
}

TEST_CASE("full-rank saliency equals the raw-feature OLS coefficients") {
    const Eigen::MatrixXd x = random_matrix(60, 7, 911);
    const Eigen::VectorXd y =
        x * random_matrix(7, 1, 912) + 0.1 * random_matrix(60, 1, 913);

    PipelineConfig config;
    config.clip_level = 1e6;
    config.n_components = 7; // full rank
    const TrainedPipeline p = fit_pipeline(x, y, config);
    const Eigen::VectorXd saliency = compute_saliency(p);

    // The no-PCA path on the same standardized features.
    PipelineConfig no_pca = config;
    no_pca.use_pca = false;
    const TrainedPipeline q = fit_pipeline(x, y, no_pca);
    CHECK((saliency - q.linear.coefficients).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("normalize_saliency") {
    Eigen::VectorXd raw(2);
    raw << 2.0, -4.0;
    const Eigen::VectorXd s = normalize_saliency(raw);
    CHECK(s(0) == doctest::Approx(0.5));
    CHECK(s(1) == doctest::Approx(-1.0));

    const Eigen::VectorXd zero = normalize_saliency(Eigen::VectorXd::Zero(4));
    CHECK(zero.cwiseAbs().maxCoeff() == doctest::Approx(0.0));

    const Eigen::VectorXd twice = normalize_saliency(s);
    CHECK((twice - s).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("normalize_saliency_per_kind uses per-kind maxima") {
    std::vector<FeatureColumn> columns = {
        {1, FeatureKind::MedianDensity, "sv1_median_density"},
        {1, FeatureKind::MedianJacDet, "sv1_median_jacdet"},
        {2, FeatureKind::MedianDensity, "sv2_median_density"},
        {2, FeatureKind::MedianJacDet, "sv2_median_jacdet"},
    };
    Eigen::VectorXd raw(4);
    raw << 2.0, 10.0, -1.0, 5.0;
    const Eigen::VectorXd joint = normalize_saliency(raw);
    CHECK(joint(0) == doctest::Approx(0.2));
    const Eigen::VectorXd per_kind = normalize_saliency_per_kind(raw, columns);
    CHECK(per_kind(0) == doctest::Approx(1.0));
    CHECK(per_kind(1) == doctest::Approx(1.0));
    CHECK(per_kind(2) == doctest::Approx(-0.5));
    CHECK(per_kind(3) == doctest::Approx(0.5));
}

TEST_CASE("aggregate_folds") {
    Eigen::VectorXd a(2), b(2);
    a << 1.0, -1.0;
    b << -1.0, -1.0;
    const Eigen::VectorXd same = aggregate_folds({a, a, a});
    CHECK((same - a).cwiseAbs().maxCoeff() == doctest::Approx(0.0));

    const Eigen::VectorXd mixed = aggregate_folds({a, b});
    CHECK(mixed(0) == doctest::Approx(0.0));
    CHECK(mixed(1) == doctest::Approx(-1.0));

    // 25 seeded random maps against the direct averaging oracle; values in
    // [-1, +1] stay in [-1, +1].
    std::uint64_t rng = 515;
    std::vector<Eigen::VectorXd> maps;
    Eigen::VectorXd want = Eigen::VectorXd::Zero(11);
    for (int f = 0; f < 25; ++f) {
        Eigen::VectorXd m(11);
        for (Eigen::Index i = 0; i < 11; ++i) m(i) = oracles::uniform(rng, -1.0, 1.0);
        maps.push_back(m);
        want += m;
    }
    want /= 25.0;
    const Eigen::VectorXd got = aggregate_folds(maps);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(got.cwiseAbs().maxCoeff() <= 1.0);

    maps.push_back(Eigen::VectorXd::Zero(5));
    CHECK_THROWS_AS(aggregate_folds(maps), DataError);
}

namespace {

SupervoxelMap three_region_map() {
    SupervoxelMap sv;
    sv.labels = LabelVolume(Dims{6, 2, 2}, Spacing{1, 1, 1}, 0);
    for (int z = 0; z < 2; ++z)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 6; ++x)
                sv.labels.at(x, y, z) = x < 2 ? 1 : (x < 4 ? 2 : 0); // label 0: excluded
    sv.count = 2;
    sv.sizes = {0, 8, 8};
    return sv;
}

} // namespace

TEST_CASE("project_to_volume") {
    const SupervoxelMap sv = three_region_map();

    SaliencyMap s;
    s.columns = {
        {1, FeatureKind::MedianDensity, "sv1_median_density"},
        {2, FeatureKind::MedianDensity, "sv2_median_density"},
    };
    s.values = Eigen::VectorXd(2);
    s.values << 0.7, -0.2;

    const Volume v = project_to_volume(s, sv, FeatureKind::MedianDensity);
    CHECK(v.at(0, 0, 0) == doctest::Approx(0.7));
    CHECK(v.at(3, 1, 1) == doctest::Approx(-0.2));
    CHECK(v.at(5, 0, 0) == doctest::Approx(0.0)); // excluded voxels take 0

    // Histogram oracle: voxel counts per saliency value equal size-weighted
    // counts of the supervoxels carrying that value.
    std::map<double, std::int64_t> histogram;
    for (double x : v.data) ++histogram[x];
    CHECK(histogram[0.7] == 8);
    CHECK(histogram[-0.2] == 8);
    CHECK(histogram[0.0] == 8);

    CHECK_THROWS_AS(project_to_volume(s, sv, FeatureKind::StddevDensity), DataError);

    SaliencyMap missing = s;
    missing.columns.push_back({2, FeatureKind::MedianJacDet, "sv2_median_jacdet"});
    missing.values.conservativeResize(3);
    missing.values(2) = 0.1;
    // supervoxel 1 lacks a median_jacdet entry
    CHECK_THROWS_AS(project_to_volume(missing, sv, FeatureKind::MedianJacDet), DataError);
}

TEST_CASE("saliency csv output") {
    SaliencyMap s;
    s.columns = {{3, FeatureKind::StddevJacDet, "sv3_stddev_jacdet"}};
    s.values = Eigen::VectorXd(1);
    s.values << -0.25;
    s.target = "age";
    const std::string path =
        (std::filesystem::temp_directory_path() / "svmorph_saliency.csv").string();
    write_saliency_csv(path, s);
    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "supervoxel,kind,value");
    CHECK(row == "3,stddev_jacdet,-0.25");
}
