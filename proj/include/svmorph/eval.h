#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "svmorph/model.h"

namespace svmorph {

// Partition of n subjects into k folds; fold sizes differ by at most 1.
struct FoldAssignment {
    std::vector<int> fold_of;
    int k = 0;
    std::uint64_t seed = 0;
};

// Seeded shuffle then round-robin.
FoldAssignment kfold_split(int n, int k, std::uint64_t seed);

double mae(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);
// Throws NumericError when the target has zero variance.
double r2(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);
// Pearson correlation of mid-ranks (ties get the average rank).
double spearman(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);

// NaN when either vector is constant (correlation undefined).
double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

struct Metrics {
    double mae = 0.0;
    double r2 = 0.0;
    double spearman = 0.0;
};

struct MetricsReport {
    std::vector<Metrics> per_fold; // NaN entries where a fold metric is undefined
    Metrics pooled;
};

struct CvResult {
    Eigen::VectorXd predictions; // out-of-fold, one per subject
    std::vector<int> fold_of;
    MetricsReport report;
};

// For each fold, fits the full pipeline (standardizer, PCA, regressor) on
// the other k-1 folds and predicts the held-out fold. Validation rows never
// touch fitting statistics. fold_models, when given, receives the k fitted
// pipelines.
CvResult cross_validate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        const PipelineConfig& config, const FoldAssignment& folds,
                        int threads = 1, std::vector<TrainedPipeline>* fold_models = nullptr);

// Pearson matrix over labeled prediction vectors (plus chronological age or
// explicit volume columns). Undefined entries are NaN.
struct CorrelationStudy {
    std::vector<std::string> labels;
    Eigen::MatrixXd matrix;
};

CorrelationStudy correlation_study(const std::vector<std::string>& labels,
                                   const std::vector<Eigen::VectorXd>& vectors);

struct FisherTest {
    double z = 0.0;
    double p = 1.0;
    bool significant = false;
};

// Two-sided Fisher z-test of two correlations observed on samples of size n:
// z = (atanh r1 - atanh r2) / sqrt(2 / (n - 3)), Bonferroni-adjusted flag
// p < alpha / n_tests.
FisherTest fisher_z_test(double rho1, double rho2, int n, double alpha = 0.05,
                         int n_tests = 18);

// Subjects to keep: a subject is removed iff its absolute error on any
// target column exceeds that column's Q3 + 1.5 IQR fence.
std::vector<bool> qc_filter(const Eigen::MatrixXd& abs_errors);

enum class AblationAxis { GridSize, ClipLevel, NComponents, FeatureSubset };

const char* ablation_axis_name(AblationAxis a);
AblationAxis parse_ablation_axis(const std::string& name);

struct AblationRow {
    std::string value;
    Metrics pooled;
};

// One cross-validation run per axis value with a fixed fold assignment.
// The provider maps an axis value to the (features, target) pair; sweeps
// that only change the model stage can return the same matrix every time.
using DatasetProvider =
    std::function<std::pair<Eigen::MatrixXd, Eigen::VectorXd>(const std::string& value)>;

std::vector<AblationRow> ablation_sweep(AblationAxis axis, const std::vector<std::string>& values,
                                        const PipelineConfig& base, const FoldAssignment& folds,
                                        const DatasetProvider& provider, int threads = 1);

// Default paper-style sweep grids per axis.
std::vector<std::string> ablation_default_values(AblationAxis axis);

} // namespace svmorph
