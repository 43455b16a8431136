#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "svmorph/features.h"
#include "svmorph/phantom.h"
#include "svmorph/slic.h"

namespace svmorph {

// Template-space preprocessing plus feature-extraction settings shared by
// the cohort builders.
struct CohortOptions {
    SlicParams slic;
    std::string roi = "whole-heart";
    std::string feature_subset = "all";
    int min_voxels = 50;
    StddevFilter jacdet_filter = StddevFilter::OwnChannel;
    int threads = 1;
};

// Feature-ready cohort: supervoxel features with targets (age in years plus
// the six measured region volumes), the explicit-measurement baseline
// features, and the noiseless generative features used by oracle checks.
struct CohortData {
    FeatureMatrix features;
    RetainedIndex index;
    SupervoxelMap supervoxels;

    std::vector<std::string> explicit_names;
    Eigen::MatrixXd explicit_features;

    std::vector<std::string> gt_names;
    Eigen::MatrixXd gt_features;
};

// Prediction target vocabulary: age, lvv, rvv, lav, rav, myov, av.
std::vector<std::string> target_names();
Eigen::VectorXd select_target(const FeatureMatrix& fm, const std::string& target);

struct ManifestEntry {
    std::string id;
    int age_months = 0;
    std::string density_path;
    std::string field_path;
    std::array<double, 6> meas_volume_ml{};
    std::array<double, 6> meas_mean_density_hu{};
    std::array<double, kPhantomRegions> gt_volume_ml{};
    std::array<double, kPhantomRegions> gt_mean_density_hu{};
};

// Reads manifest.csv; volume paths are resolved relative to the manifest
// directory.
std::vector<ManifestEntry> read_manifest(const std::string& path);

// Streams subjects straight from the generator; nothing touches disk.
CohortData build_cohort_from_spec(const PhantomSpec& spec, const CohortOptions& opts);

// Loads a generated cohort (template_density.nrrd / template_labels.nrrd
// conventionally next to the manifest).
CohortData build_cohort_from_manifest(const std::string& manifest_path,
                                      const CohortOptions& opts);

// Segment labels (1..6) and binary heart mask from a template label volume
// that uses 7 for non-segment heart tissue.
LabelVolume segments_from_template_labels(const LabelVolume& labels);
LabelVolume heart_mask_from_template_labels(const LabelVolume& labels);

} // namespace svmorph
