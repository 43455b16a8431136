#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "svmorph/features.h"
#include "svmorph/model.h"
#include "svmorph/slic.h"

namespace svmorph {

// Signed per-(supervoxel, feature-kind) importance; values lie in [-1, +1]
// after normalization. Columns are parallel to the feature matrix the model
// was trained on.
struct SaliencyMap {
    std::vector<FeatureColumn> columns;
    Eigen::VectorXd values;

    // provenance
    std::string target;
    std::string roi;
    int n_folds = 0;
};

// Raw saliency: back-projects regression coefficients through the PCA basis,
// S_hat = W^T beta. Lengths must match the PCA feature index.
Eigen::VectorXd compute_saliency(const PcaModel& pca, const LinearModel& lin);

// Saliency of a fitted pipeline; without PCA this is the raw-feature
// coefficient vector. Only defined for the linear regressor.
Eigen::VectorXd compute_saliency(const TrainedPipeline& p);

// S = S_hat / max|S_hat|, taken jointly over all features; an all-zero input
// stays all-zero. per_kind normalizes each feature kind by its own maximum
// instead (columns must then be supplied).
Eigen::VectorXd normalize_saliency(const Eigen::VectorXd& raw);
Eigen::VectorXd normalize_saliency_per_kind(const Eigen::VectorXd& raw,
                                            const std::vector<FeatureColumn>& columns);

// Element-wise mean of per-fold normalized maps.
Eigen::VectorXd aggregate_folds(const std::vector<Eigen::VectorXd>& fold_maps);

// Renders one feature kind back into template space: each voxel takes the
// saliency of its supervoxel, excluded or dropped voxels take 0.
Volume project_to_volume(const SaliencyMap& s, const SupervoxelMap& sv, FeatureKind kind);

void write_saliency_csv(const std::string& path, const SaliencyMap& s);

} // namespace svmorph
