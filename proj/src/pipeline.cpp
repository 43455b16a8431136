#include "svmorph/pipeline.h"

#include <filesystem>

#include "svmorph/csv.h"
#include "svmorph/errors.h"
#include "svmorph/nrrd.h"
#include "svmorph/parallel.h"
#include "svmorph/volume.h"

namespace svmorph {

namespace {

const char* kRegionNames[kPhantomRegions] = {"lv", "rv", "la", "ra", "myo", "aorta", "other"};

struct TemplateContext {
    SupervoxelMap sv;
    LabelVolume roi;
    RetainedIndex index;
};

TemplateContext prepare_template(const Volume& template_density, const LabelVolume& template_labels,
                                 const CohortOptions& opts) {
    TemplateContext ctx;
    const Volume transformed = clamp_transform(template_density);
    ctx.sv = slic_segment(transformed, nullptr, opts.slic, opts.threads);
    const LabelVolume segments = segments_from_template_labels(template_labels);
    const LabelVolume heart = heart_mask_from_template_labels(template_labels);
    ctx.roi = compose_roi(segments, heart, roi_by_name(opts.roi));
    ctx.index = build_retained_index(ctx.sv, ctx.roi, opts.min_voxels);
    return ctx;
}

void attach_targets(FeatureMatrix& fm, const std::vector<double>& ages_years,
                    const std::vector<std::array<double, 6>>& meas_vols) {
    const auto n = static_cast<Eigen::Index>(ages_years.size());
    fm.target_names = target_names();
    fm.targets.resize(n, 7);
    for (Eigen::Index i = 0; i < n; ++i) {
        fm.targets(i, 0) = ages_years[static_cast<std::size_t>(i)];
        for (int r = 0; r < 6; ++r)
            fm.targets(i, r + 1) = meas_vols[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)];
    }
}

std::vector<std::string> explicit_column_names() {
    std::vector<std::string> names;
    for (int r = 0; r < 6; ++r) names.push_back(std::string("dens_") + kRegionNames[r] + "_hu");
    for (int r = 0; r < 6; ++r) names.push_back(std::string("vol_") + kRegionNames[r] + "_ml");
    return names;
}

std::vector<std::string> gt_column_names() {
    std::vector<std::string> names;
    for (int r = 0; r < kPhantomRegions; ++r)
        names.push_back(std::string("gt_dens_") + kRegionNames[r] + "_hu");
    for (int r = 0; r < kPhantomRegions; ++r)
        names.push_back(std::string("gt_vol_") + kRegionNames[r] + "_ml");
    return names;
}

} // namespace

std::vector<std::string> target_names() {
    return {"age", "lvv", "rvv", "lav", "rav", "myov", "av"};
}

Eigen::VectorXd select_target(const FeatureMatrix& fm, const std::string& target) {
    for (std::size_t i = 0; i < fm.target_names.size(); ++i)
        if (fm.target_names[i] == target) return fm.targets.col(static_cast<Eigen::Index>(i));
    std::string vocab;
    for (const auto& n : fm.target_names) vocab += (vocab.empty() ? "" : ", ") + n;
    throw ConfigError("unknown target \"" + target + "\"; this matrix has: " + vocab);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    const CsvTable t = read_csv(path);
    const auto dir = std::filesystem::path(path).parent_path();

    std::vector<ManifestEntry> entries;
    const std::size_t id_col = t.column("id");
    const std::size_t age_col = t.column("age_months");
    const std::size_t density_col = t.column("density");
    const std::size_t field_col = t.column("field");
    for (const auto& row : t.rows) {
        ManifestEntry e;
        e.id = row[id_col];
        e.age_months = std::stoi(row[age_col]);
        e.density_path = (dir / row[density_col]).string();
        e.field_path = (dir / row[field_col]).string();
        for (int r = 0; r < 6; ++r) {
            e.meas_volume_ml[static_cast<std::size_t>(r)] =
                std::stod(row[t.column(std::string("meas_vol_") + kRegionNames[r] + "_ml")]);
            e.meas_mean_density_hu[static_cast<std::size_t>(r)] =
                std::stod(row[t.column(std::string("meas_dens_") + kRegionNames[r] + "_hu")]);
        }
        for (int r = 0; r < kPhantomRegions; ++r) {
            e.gt_volume_ml[static_cast<std::size_t>(r)] =
                std::stod(row[t.column(std::string("gt_vol_") + kRegionNames[r] + "_ml")]);
            e.gt_mean_density_hu[static_cast<std::size_t>(r)] =
                std::stod(row[t.column(std::string("gt_dens_") + kRegionNames[r] + "_hu")]);
        }
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw DataError(path + ": manifest has no subjects");
    return entries;
}

LabelVolume segments_from_template_labels(const LabelVolume& labels) {
    LabelVolume segments = labels;
    for (auto& v : segments.data)
        if (v > kSegmentCount) v = 0;
    return segments;
}

LabelVolume heart_mask_from_template_labels(const LabelVolume& labels) {
    LabelVolume heart = labels;
    for (auto& v : heart.data) v = v > 0 ? 1 : 0;
    return heart;
}

CohortData build_cohort_from_spec(const PhantomSpec& spec, const CohortOptions& opts) {
    const PhantomTemplate tmpl = generate_template(spec);
    const TemplateContext ctx = prepare_template(tmpl.density, tmpl.labels, opts);
    const std::vector<int> ages = sample_ages(spec);

    const auto n = static_cast<std::size_t>(spec.cohort_size);
    std::vector<std::vector<double>> per_subject(n);
    std::vector<std::string> ids(n);
    std::vector<double> ages_years(n);
    std::vector<std::array<double, 6>> meas_vols(n);
    std::vector<std::array<double, 6>> meas_dens(n);
    std::vector<std::array<double, kPhantomRegions>> gt_vols(n);
    std::vector<std::array<double, kPhantomRegions>> gt_dens(n);

    const FeatureExtractionOptions fopts{opts.min_voxels, opts.jacdet_filter};
    parallel_for(n, opts.threads, [&](std::size_t i) {
        const SubjectRecord s = generate_subject(tmpl, spec, static_cast<int>(i), ages[i]);
        const Volume jacdet = jacobian_determinant(s.field);
        per_subject[i] = extract_features(s.density, jacdet, ctx.sv, ctx.roi, ctx.index, fopts);
        ids[i] = s.id;
        ages_years[i] = s.age_years();
        meas_vols[i] = s.meas_volume_ml;
        meas_dens[i] = s.meas_mean_density_hu;
        gt_vols[i] = s.gt_volume_ml;
        gt_dens[i] = s.gt_mean_density_hu;
    });

    CohortData data;
    data.features =
        assemble_matrix(ids, per_subject, ctx.index, feature_subset_by_name(opts.feature_subset));
    data.index = ctx.index;
    data.supervoxels = ctx.sv;
    attach_targets(data.features, ages_years, meas_vols);

    data.explicit_names = explicit_column_names();
    data.explicit_features.resize(static_cast<Eigen::Index>(n), 12);
    data.gt_names = gt_column_names();
    data.gt_features.resize(static_cast<Eigen::Index>(n), 2 * kPhantomRegions);
    for (std::size_t i = 0; i < n; ++i) {
        for (int r = 0; r < 6; ++r) {
            data.explicit_features(static_cast<Eigen::Index>(i), r) =
                meas_dens[i][static_cast<std::size_t>(r)];
            data.explicit_features(static_cast<Eigen::Index>(i), 6 + r) =
                meas_vols[i][static_cast<std::size_t>(r)];
        }
        for (int r = 0; r < kPhantomRegions; ++r) {
            data.gt_features(static_cast<Eigen::Index>(i), r) =
                gt_dens[i][static_cast<std::size_t>(r)];
            data.gt_features(static_cast<Eigen::Index>(i), kPhantomRegions + r) =
                gt_vols[i][static_cast<std::size_t>(r)];
        }
    }
    return data;
}

CohortData build_cohort_from_manifest(const std::string& manifest_path,
                                      const CohortOptions& opts) {
    const auto entries = read_manifest(manifest_path);
    const auto dir = std::filesystem::path(manifest_path).parent_path();
    const Volume template_density = load_volume((dir / "template_density.nrrd").string());
    const LabelVolume template_labels = load_label_volume((dir / "template_labels.nrrd").string());
    const TemplateContext ctx = prepare_template(template_density, template_labels, opts);

    const std::size_t n = entries.size();
    std::vector<std::vector<double>> per_subject(n);
    std::vector<std::string> ids(n);
    std::vector<double> ages_years(n);
    std::vector<std::array<double, 6>> meas_vols(n);

    const FeatureExtractionOptions fopts{opts.min_voxels, opts.jacdet_filter};
    parallel_for(n, opts.threads, [&](std::size_t i) {
        const Volume density = load_volume(entries[i].density_path);
        const DeformationField field = load_field(entries[i].field_path);
        const Volume jacdet = jacobian_determinant(field);
        per_subject[i] = extract_features(density, jacdet, ctx.sv, ctx.roi, ctx.index, fopts);
        ids[i] = entries[i].id;
        ages_years[i] = entries[i].age_months / 12.0;
        meas_vols[i] = entries[i].meas_volume_ml;
    });

    CohortData data;
    data.features =
        assemble_matrix(ids, per_subject, ctx.index, feature_subset_by_name(opts.feature_subset));
    data.index = ctx.index;
    data.supervoxels = ctx.sv;
    attach_targets(data.features, ages_years, meas_vols);

    data.explicit_names = explicit_column_names();
    data.explicit_features.resize(static_cast<Eigen::Index>(n), 12);
    data.gt_names = gt_column_names();
    data.gt_features.resize(static_cast<Eigen::Index>(n), 2 * kPhantomRegions);
    for (std::size_t i = 0; i < n; ++i) {
        for (int r = 0; r < 6; ++r) {
            data.explicit_features(static_cast<Eigen::Index>(i), r) =
                entries[i].meas_mean_density_hu[static_cast<std::size_t>(r)];
            data.explicit_features(static_cast<Eigen::Index>(i), 6 + r) =
                entries[i].meas_volume_ml[static_cast<std::size_t>(r)];
        }
        for (int r = 0; r < kPhantomRegions; ++r) {
            data.gt_features(static_cast<Eigen::Index>(i), r) =
                entries[i].gt_mean_density_hu[static_cast<std::size_t>(r)];
            data.gt_features(static_cast<Eigen::Index>(i), kPhantomRegions + r) =
                entries[i].gt_volume_ml[static_cast<std::size_t>(r)];
        }
    }
    return data;
}

} // namespace svmorph
