#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "svmorph/mlp.h"

namespace svmorph {

// Per-feature z-scoring with hard clipping at +-c sigma, plus the target
// scaling. Fitted from training rows only; constant features store sigma = 1
// so their z-scores are 0.
struct Standardizer {
    Eigen::VectorXd feature_mean;
    Eigen::VectorXd feature_std;
    double target_mean = 0.0;
    double target_std = 1.0;
    double clip_level = 1.0;
};

Standardizer fit_standardizer(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train,
                              double clip_level);
Eigen::MatrixXd apply_standardizer(const Eigen::MatrixXd& x, const Standardizer& s);
Eigen::VectorXd standardize_target(const Eigen::VectorXd& y, const Standardizer& s);

// PCA basis with orthonormal rows. Sign convention: the largest-magnitude
// entry of each component is positive, so refits are reproducible.
struct PcaModel {
    Eigen::VectorXd mean;
    Eigen::MatrixXd components;         // n_components x n_features
    Eigen::VectorXd explained_variance; // non-increasing

    int n_components() const { return static_cast<int>(components.rows()); }
};

// Exact thin-SVD PCA. n_components must be in [1, min(rows, cols)].
PcaModel fit_pca(const Eigen::MatrixXd& z_train, int n_components);

// Batched incremental PCA (merge-SVD updates); spans the same subspace as
// fit_pca up to small principal angles. batch_size >= n_components.
PcaModel fit_pca_incremental(const Eigen::MatrixXd& z_train, int n_components, int batch_size);

Eigen::MatrixXd pca_transform(const Eigen::MatrixXd& z, const PcaModel& m);
Eigen::MatrixXd pca_inverse_transform(const Eigen::MatrixXd& scores, const PcaModel& m);

// Unregularized least squares with intercept. Rank-deficient designs get the
// minimum-norm solution and are flagged.
struct LinearModel {
    Eigen::VectorXd coefficients;
    double intercept = 0.0;
    bool rank_deficient = false;
};

LinearModel fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);
Eigen::VectorXd linear_predict(const LinearModel& m, const Eigen::MatrixXd& x);

enum class RegressorKind : int { Ols = 0, Mlp = 1 };

struct PipelineConfig {
    double clip_level = 1.0;
    bool use_pca = true;
    // Requested component count; fitting clamps it to min(rows, cols) of the
    // training partition and records the effective value in the model.
    int n_components = 550;
    RegressorKind regressor = RegressorKind::Ols;
    MlpConfig mlp;
};

struct TrainedPipeline {
    Standardizer standardizer;
    bool has_pca = false;
    PcaModel pca;
    RegressorKind regressor = RegressorKind::Ols;
    LinearModel linear;
    MlpModel mlp;
};

// standardize -> clip -> (PCA) -> regressor, fitted on the given rows only.
TrainedPipeline fit_pipeline(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train,
                             const PipelineConfig& config);

// Predictions in original target units.
Eigen::VectorXd predict(const TrainedPipeline& p, const Eigen::MatrixXd& x_raw);

// Single-file binary serialization (versioned header + little-endian arrays).
void save_pipeline(const TrainedPipeline& p, const std::string& path);
TrainedPipeline load_pipeline(const std::string& path);
std::string pipeline_to_bytes(const TrainedPipeline& p);

} // namespace svmorph
