#include "svmorph/eval.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "svmorph/csv.h"
#include "svmorph/errors.h"
#include "svmorph/features.h"
#include "svmorph/parallel.h"

namespace svmorph {

FoldAssignment kfold_split(int n, int k, std::uint64_t seed) {
    if (k < 1) throw ConfigError("kfold_split: k must be >= 1");
    if (n < k) throw DataError("kfold_split: fewer subjects than folds");

    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    for (int i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(perm[static_cast<std::size_t>(i)], perm[j]);
    }

    FoldAssignment fa;
    fa.k = k;
    fa.seed = seed;
    fa.fold_of.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) fa.fold_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i % k;
    return fa;
}

double mae(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
    if (y.size() != yhat.size() || y.size() < 1) throw DataError("mae: length mismatch");
    return (y - yhat).cwiseAbs().mean();
}

double r2(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
    if (y.size() != yhat.size() || y.size() < 2) throw DataError("r2: need >= 2 paired values");
    const double ss_tot = (y.array() - y.mean()).square().sum();
    if (ss_tot == 0.0) throw NumericError("r2: zero target variance");
    const double ss_res = (y - yhat).squaredNorm();
    return 1.0 - ss_res / ss_tot;
}

namespace {

// Mid-ranks: ties share the average of the ranks they occupy.
Eigen::VectorXd mid_ranks(const Eigen::VectorXd& v) {
    const Eigen::Index n = v.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&v](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
    Eigen::VectorXd ranks(n);
    Eigen::Index i = 0;
    while (i < n) {
        Eigen::Index j = i;
        while (j + 1 < n && v(order[static_cast<std::size_t>(j + 1)]) ==
                                v(order[static_cast<std::size_t>(i)]))
            ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0; // ranks are 1-based
        for (Eigen::Index t = i; t <= j; ++t) ranks(order[static_cast<std::size_t>(t)]) = avg;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
    if (y.size() != yhat.size() || y.size() < 2)
        throw DataError("spearman: need >= 2 paired values");
    const double rho = pearson(mid_ranks(y), mid_ranks(yhat));
    if (std::isnan(rho)) throw NumericError("spearman: undefined for constant input");
    return rho;
}

double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != y.size() || x.size() < 2) throw DataError("pearson: length mismatch");
    const Eigen::ArrayXd xc = x.array() - x.mean();
    const Eigen::ArrayXd yc = y.array() - y.mean();
    const double sx = std::sqrt(xc.square().sum());
    const double sy = std::sqrt(yc.square().sum());
    if (sx == 0.0 || sy == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return (xc * yc).sum() / (sx * sy);
}

namespace {

Metrics safe_metrics(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
    Metrics m;
    m.mae = mae(y, yhat);
    try {
        m.r2 = r2(y, yhat);
    } catch (const NumericError&) {
        m.r2 = std::numeric_limits<double>::quiet_NaN();
    }
    try {
        m.spearman = spearman(y, yhat);
    } catch (const NumericError&) {
        m.spearman = std::numeric_limits<double>::quiet_NaN();
    }
    return m;
}

} // namespace

CvResult cross_validate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        const PipelineConfig& config, const FoldAssignment& folds,
                        int threads, std::vector<TrainedPipeline>* fold_models) {
    const Eigen::Index n = x.rows();
    if (y.size() != n) throw DataError("cross_validate: feature/target row count mismatch");
    if (static_cast<Eigen::Index>(folds.fold_of.size()) != n)
        throw DataError("cross_validate: fold assignment size mismatch");
    const int k = folds.k;

    CvResult result;
    result.fold_of = folds.fold_of;
    result.predictions.resize(n);
    result.report.per_fold.resize(static_cast<std::size_t>(k));
    if (fold_models) fold_models->resize(static_cast<std::size_t>(k));

    std::vector<std::string> failures(static_cast<std::size_t>(k));
    parallel_for(static_cast<std::size_t>(k), threads, [&](std::size_t f) {
        std::vector<Eigen::Index> train_rows, val_rows;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (folds.fold_of[static_cast<std::size_t>(i)] == static_cast<int>(f))
                val_rows.push_back(i);
            else
                train_rows.push_back(i);
        }
        Eigen::MatrixXd xt(static_cast<Eigen::Index>(train_rows.size()), x.cols());
        Eigen::VectorXd yt(static_cast<Eigen::Index>(train_rows.size()));
        for (std::size_t i = 0; i < train_rows.size(); ++i) {
            xt.row(static_cast<Eigen::Index>(i)) = x.row(train_rows[i]);
            yt(static_cast<Eigen::Index>(i)) = y(train_rows[i]);
        }
        Eigen::MatrixXd xv(static_cast<Eigen::Index>(val_rows.size()), x.cols());
        Eigen::VectorXd yv(static_cast<Eigen::Index>(val_rows.size()));
        for (std::size_t i = 0; i < val_rows.size(); ++i) {
            xv.row(static_cast<Eigen::Index>(i)) = x.row(val_rows[i]);
            yv(static_cast<Eigen::Index>(i)) = y(val_rows[i]);
        }

        try {
            const TrainedPipeline p = fit_pipeline(xt, yt, config);
            const Eigen::VectorXd pred = predict(p, xv);
            for (std::size_t i = 0; i < val_rows.size(); ++i)
                result.predictions(val_rows[i]) = pred(static_cast<Eigen::Index>(i));
            result.report.per_fold[f] = safe_metrics(yv, pred);
            if (fold_models) (*fold_models)[f] = p;
        } catch (const std::exception& e) {
            failures[f] = e.what();
        }
    });
    for (int f = 0; f < k; ++f)
        if (!failures[static_cast<std::size_t>(f)].empty())
            throw NumericError("cross_validate: fold " + std::to_string(f) +
                               " failed: " + failures[static_cast<std::size_t>(f)]);

    result.report.pooled = safe_metrics(y, result.predictions);
    return result;
}

CorrelationStudy correlation_study(const std::vector<std::string>& labels,
                                   const std::vector<Eigen::VectorXd>& vectors) {
    if (labels.size() != vectors.size())
        throw DataError("correlation_study: label/vector count mismatch");
    if (vectors.empty()) throw DataError("correlation_study: no vectors");
    const Eigen::Index len = vectors.front().size();
    for (const auto& v : vectors)
        if (v.size() != len) throw DataError("correlation_study: vector length mismatch");

    const auto m = static_cast<Eigen::Index>(vectors.size());
    CorrelationStudy study;
    study.labels = labels;
    study.matrix.resize(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        study.matrix(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < m; ++j) {
            const double rho = pearson(vectors[static_cast<std::size_t>(i)],
                                       vectors[static_cast<std::size_t>(j)]);
            study.matrix(i, j) = rho;
            study.matrix(j, i) = rho;
        }
    }
    return study;
}

FisherTest fisher_z_test(double rho1, double rho2, int n, double alpha, int n_tests) {
    if (!(std::abs(rho1) < 1.0) || !(std::abs(rho2) < 1.0))
        throw NumericError("fisher_z_test: |rho| must be < 1");
    if (n <= 3) throw NumericError("fisher_z_test: n must be > 3");

    FisherTest t;
    t.z = (std::atanh(rho1) - std::atanh(rho2)) / std::sqrt(2.0 / (n - 3));
    t.p = std::erfc(std::abs(t.z) / std::sqrt(2.0));
    t.significant = t.p < alpha / n_tests;
    return t;
}

std::vector<bool> qc_filter(const Eigen::MatrixXd& abs_errors) {
    const Eigen::Index n = abs_errors.rows();
    std::vector<bool> keep(static_cast<std::size_t>(n), true);
    for (Eigen::Index c = 0; c < abs_errors.cols(); ++c) {
        std::vector<double> col(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = abs_errors(i, c);
        std::sort(col.begin(), col.end());
        auto quantile = [&col](double q) {
            const double pos = q * static_cast<double>(col.size() - 1);
            const auto lo = static_cast<std::size_t>(std::floor(pos));
            const auto hi = static_cast<std::size_t>(std::ceil(pos));
            return col[lo] + (pos - static_cast<double>(lo)) * (col[hi] - col[lo]);
        };
        const double q1 = quantile(0.25), q3 = quantile(0.75);
        const double fence = q3 + 1.5 * (q3 - q1);
        for (Eigen::Index i = 0; i < n; ++i)
            if (abs_errors(i, c) > fence) keep[static_cast<std::size_t>(i)] = false;
    }
    return keep;
}

const char* ablation_axis_name(AblationAxis a) {
    switch (a) {
        case AblationAxis::GridSize: return "grid_size";
        case AblationAxis::ClipLevel: return "clip_level";
        case AblationAxis::NComponents: return "n_components";
        case AblationAxis::FeatureSubset: return "feature_subset";
    }
    throw ConfigError("unknown ablation axis");
}

AblationAxis parse_ablation_axis(const std::string& name) {
    if (name == "grid_size") return AblationAxis::GridSize;
    if (name == "clip_level") return AblationAxis::ClipLevel;
    if (name == "n_components") return AblationAxis::NComponents;
    if (name == "feature_subset") return AblationAxis::FeatureSubset;
    throw ConfigError("unknown ablation axis \"" + name +
                      "\"; expected grid_size, clip_level, n_components or feature_subset");
}

std::vector<AblationRow> ablation_sweep(AblationAxis axis, const std::vector<std::string>& values,
                                        const PipelineConfig& base, const FoldAssignment& folds,
                                        const DatasetProvider& provider, int threads) {
    std::vector<AblationRow> rows;
    for (const auto& value : values) {
        PipelineConfig config = base;
        switch (axis) {
            case AblationAxis::ClipLevel: config.clip_level = std::stod(value); break;
            case AblationAxis::NComponents: config.n_components = std::stoi(value); break;
            case AblationAxis::GridSize:
            case AblationAxis::FeatureSubset: break; // dataset-side axes
        }
        const auto [x, y] = provider(value);
        const CvResult cv = cross_validate(x, y, config, folds, threads);
        rows.push_back({value, cv.report.pooled});
    }
    return rows;
}

std::vector<std::string> ablation_default_values(AblationAxis axis) {
    std::vector<std::string> values;
    switch (axis) {
        case AblationAxis::GridSize:
            for (int g = 10; g <= 25; ++g) values.push_back(std::to_string(g));
            break;
        case AblationAxis::ClipLevel:
            for (int i = 1; i <= 20; ++i) values.push_back(csv_num(0.25 * i));
            break;
        case AblationAxis::NComponents:
            for (int c = 50; c <= 600; c += 50) values.push_back(std::to_string(c));
            break;
        case AblationAxis::FeatureSubset:
            values = feature_subset_names();
            break;
    }
    return values;
}

} // namespace svmorph
