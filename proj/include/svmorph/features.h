#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "svmorph/slic.h"
#include "svmorph/volume.h"

namespace svmorph {

// The four per-supervoxel features. "Volume" in user-facing subset names
// refers to the JacDet channel. Column order within a supervoxel follows
// this enum.
enum class FeatureKind : int {
    MedianDensity = 0,
    MedianJacDet = 1,
    StddevDensity = 2,
    StddevJacDet = 3,
};
constexpr int kFeatureKindCount = 4;

const char* feature_kind_name(FeatureKind k);
FeatureKind parse_feature_kind(const std::string& name);

// Named cardiac segments; values are the labels used in segment volumes.
enum class Segment : int { LV = 1, RV = 2, LA = 3, RA = 4, MYO = 5, Aorta = 6 };
constexpr int kSegmentCount = 6;

const char* segment_name(Segment s);
Segment parse_segment(const std::string& name);

// An ROI is a union of named segments, optionally plus "Other" (heart-mask
// voxels outside every named segment).
struct RoiSpec {
    std::string name;
    std::vector<Segment> segments;
    bool include_other = false;

    void validate() const;
};

// ROI vocabulary: whole-heart, six-regions, chambers, only-other,
// lv, rv, la, ra, myo, aorta. Unknown name -> ConfigError listing the
// vocabulary.
RoiSpec roi_by_name(const std::string& name);
std::vector<std::string> roi_names();

// median (midpoint of the two middles) and the sample standard deviation of
// the values left after 1.5 IQR filtering (quartiles by linear
// interpolation). A single retained value gives robust_std = 0.
struct RobustStats {
    double median = 0.0;
    double robust_std = 0.0;
};
RobustStats robust_stats(std::vector<double> values);

// Sample standard deviation of values[i] for the i where filter_by[i] lies
// inside its own 1.5 IQR fences. Used for the density-filtered JacDet mode.
double robust_std_filtered_by(const std::vector<double>& values,
                              const std::vector<double>& filter_by);

// Binary mask (1/0) for the ROI: union of the included segments intersected
// with the heart mask; "Other" adds heart voxels outside all named segments.
LabelVolume compose_roi(const LabelVolume& segments, const LabelVolume& heart_mask,
                        const RoiSpec& spec);

// Which channel's IQR fences filter the StddevJacDet feature.
enum class StddevFilter { OwnChannel, DensityChannel };

struct FeatureExtractionOptions {
    int min_voxels = 50;
    StddevFilter jacdet_filter = StddevFilter::OwnChannel;
};

// Supervoxels surviving the ROI intersection and the minimum-size check.
// Depends only on template geometry, never on subject data.
struct RetainedIndex {
    std::vector<int> supervoxel_ids; // ascending
};
RetainedIndex build_retained_index(const SupervoxelMap& sv, const LabelVolume& roi,
                                   int min_voxels = 50);

// Four robust features per retained supervoxel over the ROI-intersected
// voxels, ordered supervoxel-major / kind-minor.
std::vector<double> extract_features(const Volume& density, const Volume& jacdet,
                                     const SupervoxelMap& sv, const LabelVolume& roi,
                                     const RetainedIndex& index,
                                     const FeatureExtractionOptions& opts = {},
                                     int threads = 1);

// Segment mean density (HU) and volume (mL) for the six named segments.
struct ExplicitMeasurements {
    std::array<double, kSegmentCount> mean_density_hu{};
    std::array<double, kSegmentCount> volume_ml{};
};
ExplicitMeasurements explicit_measurements(const LabelVolume& segments, const Volume& density);

// One column of a feature matrix: a (supervoxel, kind) pair or a named
// explicit measurement (supervoxel_id = -1).
struct FeatureColumn {
    int supervoxel_id = -1;
    FeatureKind kind = FeatureKind::MedianDensity;
    std::string name;
};

struct FeatureMatrix {
    std::vector<std::string> subject_ids;
    std::vector<FeatureColumn> columns;
    Eigen::MatrixXd values;

    std::vector<std::string> target_names;
    Eigen::MatrixXd targets;
};

// Restricts per-subject full feature vectors (4 per retained supervoxel) to
// the requested kinds and stacks them into a matrix. Column ordering is
// supervoxel-major, kind-minor and deterministic.
FeatureMatrix assemble_matrix(const std::vector<std::string>& subject_ids,
                              const std::vector<std::vector<double>>& per_subject,
                              const RetainedIndex& index,
                              const std::vector<FeatureKind>& subset);

// The nine supervoxel feature subsets: all, median-density, median-volume,
// stddev-density, stddev-volume, median-stddev-density, median-stddev-volume,
// median-density-volume, stddev-density-volume.
std::vector<FeatureKind> feature_subset_by_name(const std::string& name);
std::vector<std::string> feature_subset_names();

void write_feature_matrix(const std::string& path, const FeatureMatrix& fm);
FeatureMatrix read_feature_matrix(const std::string& path);

void write_retained_index(const std::string& path, const RetainedIndex& index);

} // namespace svmorph
