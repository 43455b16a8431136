#include "svmorph/saliency.h"

#include <cmath>
#include <map>
#include <set>

#include "svmorph/csv.h"
#include "svmorph/errors.h"

namespace svmorph {

Eigen::VectorXd compute_saliency(const PcaModel& pca, const LinearModel& lin) {
    if (lin.coefficients.size() != pca.components.rows())
        throw DataError("compute_saliency: coefficient count does not match PCA components");
    return pca.components.transpose() * lin.coefficients;
}

Eigen::VectorXd compute_saliency(const TrainedPipeline& p) {
    if (p.regressor != RegressorKind::Ols)
        throw ConfigError("compute_saliency: defined only for the linear regressor");
    if (p.has_pca) return compute_saliency(p.pca, p.linear);
    return p.linear.coefficients;
}

Eigen::VectorXd normalize_saliency(const Eigen::VectorXd& raw) {
    for (Eigen::Index i = 0; i < raw.size(); ++i)
        if (!std::isfinite(raw(i))) throw DataError("normalize_saliency: non-finite saliency");
    const double peak = raw.cwiseAbs().maxCoeff();
    if (peak == 0.0) return raw;
    return raw / peak;
}

Eigen::VectorXd normalize_saliency_per_kind(const Eigen::VectorXd& raw,
                                            const std::vector<FeatureColumn>& columns) {
    if (raw.size() != static_cast<Eigen::Index>(columns.size()))
        throw DataError("normalize_saliency_per_kind: column count mismatch");
    double peak[kFeatureKindCount] = {};
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
        const int k = static_cast<int>(columns[static_cast<std::size_t>(i)].kind);
        peak[k] = std::max(peak[k], std::abs(raw(i)));
    }
    Eigen::VectorXd out(raw.size());
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
        const int k = static_cast<int>(columns[static_cast<std::size_t>(i)].kind);
        out(i) = peak[k] == 0.0 ? raw(i) : raw(i) / peak[k];
    }
    return out;
}

Eigen::VectorXd aggregate_folds(const std::vector<Eigen::VectorXd>& fold_maps) {
    if (fold_maps.empty()) throw DataError("aggregate_folds: no fold maps");
    const Eigen::Index len = fold_maps.front().size();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(len);
    for (const auto& m : fold_maps) {
        if (m.size() != len) throw DataError("aggregate_folds: feature index mismatch");
        sum += m;
    }
    return sum / static_cast<double>(fold_maps.size());
}

Volume project_to_volume(const SaliencyMap& s, const SupervoxelMap& sv, FeatureKind kind) {
    if (s.values.size() != static_cast<Eigen::Index>(s.columns.size()))
        throw DataError("project_to_volume: malformed saliency map");

    std::map<int, double> by_supervoxel;
    std::set<int> all_supervoxels;
    for (std::size_t i = 0; i < s.columns.size(); ++i) {
        const auto& col = s.columns[i];
        if (col.supervoxel_id < 0) continue; // explicit-measurement column
        all_supervoxels.insert(col.supervoxel_id);
        if (col.kind == kind) by_supervoxel[col.supervoxel_id] = s.values(static_cast<Eigen::Index>(i));
    }
    if (by_supervoxel.empty())
        throw DataError(std::string("project_to_volume: saliency map has no ") +
                        feature_kind_name(kind) + " entries");
    for (int id : all_supervoxels)
        if (!by_supervoxel.count(id))
            throw DataError("project_to_volume: supervoxel " + std::to_string(id) +
                            " missing a " + feature_kind_name(kind) + " entry");

    Volume out(sv.labels.dims, sv.labels.spacing, 0.0);
    for (std::size_t i = 0; i < sv.labels.data.size(); ++i) {
        const std::int32_t lab = sv.labels.data[i];
        if (lab <= 0) continue;
        const auto it = by_supervoxel.find(lab);
        if (it != by_supervoxel.end()) out.data[i] = it->second;
    }
    return out;
}

void write_saliency_csv(const std::string& path, const SaliencyMap& s) {
    CsvTable t;
    t.header = {"supervoxel", "kind", "value"};
    for (std::size_t i = 0; i < s.columns.size(); ++i) {
        const auto& col = s.columns[i];
        t.rows.push_back({col.supervoxel_id < 0 ? col.name : csv_int(col.supervoxel_id),
                          col.supervoxel_id < 0 ? "explicit" : feature_kind_name(col.kind),
                          csv_num(s.values(static_cast<Eigen::Index>(i)))});
    }
    write_csv(path, t);
}

} // namespace svmorph
