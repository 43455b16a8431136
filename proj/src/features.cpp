#include "svmorph/features.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "svmorph/csv.h"
#include "svmorph/errors.h"
#include "svmorph/parallel.h"

namespace svmorph {

namespace {

const char* kKindNames[kFeatureKindCount] = {"median_density", "median_jacdet",
                                             "stddev_density", "stddev_jacdet"};

const char* kSegmentNames[kSegmentCount] = {"lv", "rv", "la", "ra", "myo", "aorta"};

double sorted_median(const std::vector<double>& sorted) {
    const std::size_t n = sorted.size();
    if (n % 2 == 1) return sorted[n / 2];
    return 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

// Quartile by linear interpolation at position (n-1)*q of the sorted values.
double sorted_quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double sample_std(const std::vector<double>& values) {
    const std::size_t n = values.size();
    if (n < 2) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(n - 1));
}

struct Fences {
    double lo, hi;
};

Fences iqr_fences(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const double q1 = sorted_quantile(values, 0.25);
    const double q3 = sorted_quantile(values, 0.75);
    const double iqr = q3 - q1;
    return {q1 - 1.5 * iqr, q3 + 1.5 * iqr};
}

} // namespace

const char* feature_kind_name(FeatureKind k) { return kKindNames[static_cast<int>(k)]; }

FeatureKind parse_feature_kind(const std::string& name) {
    for (int i = 0; i < kFeatureKindCount; ++i)
        if (name == kKindNames[i]) return static_cast<FeatureKind>(i);
    throw ConfigError("unknown feature kind \"" + name + "\"");
}

const char* segment_name(Segment s) { return kSegmentNames[static_cast<int>(s) - 1]; }

Segment parse_segment(const std::string& name) {
    for (int i = 0; i < kSegmentCount; ++i)
        if (name == kSegmentNames[i]) return static_cast<Segment>(i + 1);
    throw ConfigError("unknown segment name \"" + name + "\"");
}

void RoiSpec::validate() const {
    if (segments.empty() && !include_other)
        throw ConfigError("roi \"" + name + "\": empty (no segments, no other)");
}

RoiSpec roi_by_name(const std::string& name) {
    const std::vector<Segment> all = {Segment::LV, Segment::RV,  Segment::LA,
                                      Segment::RA, Segment::MYO, Segment::Aorta};
    if (name == "whole-heart") return {name, all, true};
    if (name == "six-regions") return {name, all, false};
    if (name == "chambers")
        return {name, {Segment::LV, Segment::RV, Segment::LA, Segment::RA}, false};
    if (name == "only-other") return {name, {}, true};
    for (Segment s : all)
        if (name == segment_name(s)) return {name, {s}, false};

    std::string vocab;
    for (const auto& n : roi_names()) vocab += (vocab.empty() ? "" : ", ") + n;
    throw ConfigError("unknown roi \"" + name + "\"; expected one of: " + vocab);
}

std::vector<std::string> roi_names() {
    return {"whole-heart", "six-regions", "chambers", "only-other",
            "lv",          "rv",          "la",       "ra",
            "myo",         "aorta"};
}

RobustStats robust_stats(std::vector<double> values) {
    if (values.empty()) throw DataError("robust_stats: empty input");
    for (double v : values)
        if (!std::isfinite(v)) throw DataError("robust_stats: non-finite input value");
    std::sort(values.begin(), values.end());

    RobustStats out;
    out.median = sorted_median(values);

    const double q1 = sorted_quantile(values, 0.25);
    const double q3 = sorted_quantile(values, 0.75);
    const double iqr = q3 - q1;
    const double lo = q1 - 1.5 * iqr, hi = q3 + 1.5 * iqr;
    std::vector<double> kept;
    kept.reserve(values.size());
    for (double v : values)
        if (v >= lo && v <= hi) kept.push_back(v);
    out.robust_std = sample_std(kept);
    return out;
}

double robust_std_filtered_by(const std::vector<double>& values,
                              const std::vector<double>& filter_by) {
    if (values.empty()) throw DataError("robust_std_filtered_by: empty input");
    if (values.size() != filter_by.size())
        throw DataError("robust_std_filtered_by: length mismatch");
    const Fences f = iqr_fences(filter_by);
    std::vector<double> kept;
    kept.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        if (filter_by[i] >= f.lo && filter_by[i] <= f.hi) kept.push_back(values[i]);
    return sample_std(kept);
}

LabelVolume compose_roi(const LabelVolume& segments, const LabelVolume& heart_mask,
                        const RoiSpec& spec) {
    spec.validate();
    if (!(segments.dims == heart_mask.dims))
        throw DataError("compose_roi: segments and heart_mask dims differ");

    bool included[kSegmentCount + 1] = {};
    for (Segment s : spec.segments) included[static_cast<int>(s)] = true;

    LabelVolume out(segments.dims, segments.spacing, 0);
    for (std::size_t i = 0; i < segments.data.size(); ++i) {
        if (heart_mask.data[i] <= 0) continue;
        const std::int32_t lab = segments.data[i];
        const bool named = lab >= 1 && lab <= kSegmentCount;
        if (named ? included[lab] : spec.include_other) out.data[i] = 1;
    }
    return out;
}

RetainedIndex build_retained_index(const SupervoxelMap& sv, const LabelVolume& roi,
                                   int min_voxels) {
    if (!(sv.labels.dims == roi.dims))
        throw DataError("build_retained_index: supervoxel and roi dims differ");
    std::vector<std::int64_t> in_roi(static_cast<std::size_t>(sv.count) + 1, 0);
    std::int64_t roi_voxels = 0;
    for (std::size_t i = 0; i < roi.data.size(); ++i) {
        if (roi.data[i] <= 0) continue;
        ++roi_voxels;
        const std::int32_t lab = sv.labels.data[i];
        if (lab > 0) ++in_roi[static_cast<std::size_t>(lab)];
    }
    if (roi_voxels == 0) throw DataError("build_retained_index: empty roi");

    RetainedIndex index;
    for (int lab = 1; lab <= sv.count; ++lab)
        if (in_roi[static_cast<std::size_t>(lab)] >= min_voxels) index.supervoxel_ids.push_back(lab);
    if (index.supervoxel_ids.empty())
        throw DataError("build_retained_index: every supervoxel dropped by the " +
                        std::to_string(min_voxels) + "-voxel minimum");
    return index;
}

std::vector<double> extract_features(const Volume& density, const Volume& jacdet,
                                     const SupervoxelMap& sv, const LabelVolume& roi,
                                     const RetainedIndex& index,
                                     const FeatureExtractionOptions& opts, int threads) {
    if (!(density.dims == sv.labels.dims) || !(jacdet.dims == sv.labels.dims) ||
        !(roi.dims == sv.labels.dims))
        throw DataError("extract_features: grid dims differ");

    // Group ROI voxels by supervoxel label (ascending voxel order).
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(sv.count) + 1);
    for (std::size_t i = 0; i < roi.data.size(); ++i) {
        if (roi.data[i] <= 0) continue;
        const std::int32_t lab = sv.labels.data[i];
        if (lab > 0) members[static_cast<std::size_t>(lab)].push_back(i);
    }

    std::vector<double> out(index.supervoxel_ids.size() * kFeatureKindCount);
    parallel_for(index.supervoxel_ids.size(), threads, [&](std::size_t r) {
        const int lab = index.supervoxel_ids[r];
        const auto& voxels = members[static_cast<std::size_t>(lab)];
        if (static_cast<int>(voxels.size()) < opts.min_voxels)
            throw DataError("extract_features: retained supervoxel " + std::to_string(lab) +
                            " has fewer than " + std::to_string(opts.min_voxels) +
                            " voxels in the roi");
        std::vector<double> dens(voxels.size()), jac(voxels.size());
        for (std::size_t k = 0; k < voxels.size(); ++k) {
            dens[k] = density.data[voxels[k]];
            jac[k] = jacdet.data[voxels[k]];
        }
        const RobustStats ds = robust_stats(dens);
        const RobustStats js = robust_stats(jac);
        double stddev_jac = js.robust_std;
        if (opts.jacdet_filter == StddevFilter::DensityChannel)
            stddev_jac = robust_std_filtered_by(jac, dens);

        double* f = out.data() + r * kFeatureKindCount;
        f[static_cast<int>(FeatureKind::MedianDensity)] = ds.median;
        f[static_cast<int>(FeatureKind::MedianJacDet)] = js.median;
        f[static_cast<int>(FeatureKind::StddevDensity)] = ds.robust_std;
        f[static_cast<int>(FeatureKind::StddevJacDet)] = stddev_jac;
    });
    return out;
}

ExplicitMeasurements explicit_measurements(const LabelVolume& segments, const Volume& density) {
    if (!(segments.dims == density.dims))
        throw DataError("explicit_measurements: dims differ");
    std::array<double, kSegmentCount> sum{};
    std::array<std::int64_t, kSegmentCount> count{};
    for (std::size_t i = 0; i < segments.data.size(); ++i) {
        const std::int32_t lab = segments.data[i];
        if (lab >= 1 && lab <= kSegmentCount) {
            sum[static_cast<std::size_t>(lab - 1)] += density.data[i];
            ++count[static_cast<std::size_t>(lab - 1)];
        }
    }
    const double voxel_ml =
        segments.spacing.sx * segments.spacing.sy * segments.spacing.sz / 1000.0;
    ExplicitMeasurements out;
    for (int s = 0; s < kSegmentCount; ++s) {
        if (count[static_cast<std::size_t>(s)] == 0)
            throw DataError(std::string("explicit_measurements: missing segment ") +
                            kSegmentNames[s]);
        out.mean_density_hu[static_cast<std::size_t>(s)] =
            sum[static_cast<std::size_t>(s)] / static_cast<double>(count[static_cast<std::size_t>(s)]);
        out.volume_ml[static_cast<std::size_t>(s)] =
            static_cast<double>(count[static_cast<std::size_t>(s)]) * voxel_ml;
    }
    return out;
}

FeatureMatrix assemble_matrix(const std::vector<std::string>& subject_ids,
                              const std::vector<std::vector<double>>& per_subject,
                              const RetainedIndex& index,
                              const std::vector<FeatureKind>& subset) {
    if (subject_ids.size() != per_subject.size())
        throw DataError("assemble_matrix: subject id / vector count mismatch");
    if (subset.empty()) throw ConfigError("assemble_matrix: empty feature subset");
    const std::size_t full_len = index.supervoxel_ids.size() * kFeatureKindCount;
    for (const auto& vec : per_subject)
        if (vec.size() != full_len)
            throw DataError("assemble_matrix: per-subject vector length inconsistent with index");

    // Kinds in enum order regardless of how the subset was listed.
    std::vector<FeatureKind> kinds;
    for (int k = 0; k < kFeatureKindCount; ++k) {
        const auto fk = static_cast<FeatureKind>(k);
        if (std::find(subset.begin(), subset.end(), fk) != subset.end()) kinds.push_back(fk);
    }

    FeatureMatrix fm;
    fm.subject_ids = subject_ids;
    for (int lab : index.supervoxel_ids)
        for (FeatureKind k : kinds)
            fm.columns.push_back(
                {lab, k, "sv" + std::to_string(lab) + "_" + feature_kind_name(k)});

    fm.values.resize(static_cast<Eigen::Index>(subject_ids.size()),
                     static_cast<Eigen::Index>(fm.columns.size()));
    for (std::size_t s = 0; s < per_subject.size(); ++s) {
        Eigen::Index col = 0;
        for (std::size_t r = 0; r < index.supervoxel_ids.size(); ++r)
            for (FeatureKind k : kinds)
                fm.values(static_cast<Eigen::Index>(s), col++) =
                    per_subject[s][r * kFeatureKindCount + static_cast<std::size_t>(k)];
    }
    return fm;
}

std::vector<FeatureKind> feature_subset_by_name(const std::string& name) {
    using K = FeatureKind;
    if (name == "all") return {K::MedianDensity, K::MedianJacDet, K::StddevDensity, K::StddevJacDet};
    if (name == "median-density") return {K::MedianDensity};
    if (name == "median-volume") return {K::MedianJacDet};
    if (name == "stddev-density") return {K::StddevDensity};
    if (name == "stddev-volume") return {K::StddevJacDet};
    if (name == "median-stddev-density") return {K::MedianDensity, K::StddevDensity};
    if (name == "median-stddev-volume") return {K::MedianJacDet, K::StddevJacDet};
    if (name == "median-density-volume") return {K::MedianDensity, K::MedianJacDet};
    if (name == "stddev-density-volume") return {K::StddevDensity, K::StddevJacDet};
    std::string vocab;
    for (const auto& n : feature_subset_names()) vocab += (vocab.empty() ? "" : ", ") + n;
    throw ConfigError("unknown feature subset \"" + name + "\"; expected one of: " + vocab);
}

std::vector<std::string> feature_subset_names() {
    return {"all",
            "median-density",
            "median-volume",
            "stddev-density",
            "stddev-volume",
            "median-stddev-density",
            "median-stddev-volume",
            "median-density-volume",
            "stddev-density-volume"};
}

void write_feature_matrix(const std::string& path, const FeatureMatrix& fm) {
    CsvTable t;
    t.header.push_back("subject_id");
    for (const auto& c : fm.columns) t.header.push_back(c.name);
    for (const auto& name : fm.target_names) t.header.push_back("target_" + name);
    for (std::size_t s = 0; s < fm.subject_ids.size(); ++s) {
        std::vector<std::string> row;
        row.push_back(fm.subject_ids[s]);
        for (Eigen::Index c = 0; c < fm.values.cols(); ++c)
            row.push_back(csv_num(fm.values(static_cast<Eigen::Index>(s), c)));
        for (Eigen::Index c = 0; c < fm.targets.cols(); ++c)
            row.push_back(csv_num(fm.targets(static_cast<Eigen::Index>(s), c)));
        t.rows.push_back(std::move(row));
    }
    write_csv(path, t);
}

FeatureMatrix read_feature_matrix(const std::string& path) {
    const CsvTable t = read_csv(path);
    if (t.header.empty() || t.header[0] != "subject_id")
        throw DataError(path + ": first column must be subject_id");

    FeatureMatrix fm;
    std::vector<std::size_t> value_cols, target_cols;
    for (std::size_t c = 1; c < t.header.size(); ++c) {
        const std::string& name = t.header[c];
        if (name.rfind("target_", 0) == 0) {
            fm.target_names.push_back(name.substr(7));
            target_cols.push_back(c);
            continue;
        }
        FeatureColumn col;
        col.name = name;
        if (name.rfind("sv", 0) == 0) {
            const auto underscore = name.find('_');
            if (underscore == std::string::npos)
                throw DataError(path + ": malformed feature column \"" + name + "\"");
            try {
                col.supervoxel_id = std::stoi(name.substr(2, underscore - 2));
            } catch (const std::exception&) {
                throw DataError(path + ": malformed feature column \"" + name + "\"");
            }
            col.kind = parse_feature_kind(name.substr(underscore + 1));
        }
        fm.columns.push_back(std::move(col));
        value_cols.push_back(c);
    }

    fm.values.resize(static_cast<Eigen::Index>(t.rows.size()),
                     static_cast<Eigen::Index>(value_cols.size()));
    fm.targets.resize(static_cast<Eigen::Index>(t.rows.size()),
                      static_cast<Eigen::Index>(target_cols.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        fm.subject_ids.push_back(t.rows[r][0]);
        for (std::size_t c = 0; c < value_cols.size(); ++c)
            fm.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                std::stod(t.rows[r][value_cols[c]]);
        for (std::size_t c = 0; c < target_cols.size(); ++c)
            fm.targets(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                std::stod(t.rows[r][target_cols[c]]);
    }
    return fm;
}

void write_retained_index(const std::string& path, const RetainedIndex& index) {
    CsvTable t;
    t.header = {"column", "supervoxel_id", "kind"};
    long long col = 0;
    for (int lab : index.supervoxel_ids)
        for (int k = 0; k < kFeatureKindCount; ++k)
            t.rows.push_back({csv_int(col++), csv_int(lab),
                              feature_kind_name(static_cast<FeatureKind>(k))});
    write_csv(path, t);
}

} // namespace svmorph
