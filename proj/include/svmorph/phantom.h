#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "svmorph/volume.h"

namespace svmorph {

// One ellipsoidal region: geometry in voxel coordinates, plus the age model
// (density offset in HU/year, linear volume-scale slope per year).
struct PhantomRegion {
    std::string name;
    std::array<double, 3> center{};
    std::array<double, 3> semi_axes{};
    double base_density = 0.0;  // HU
    double density_slope = 0.0; // HU / year
    double volume_slope = 0.0;  // scale / year
};

// Synthetic cohort specification. Six named regions (Segment order) inside a
// heart envelope whose leftover voxels form the "other" tissue. Noise terms:
// template texture, per-voxel acquisition noise, per-subject per-region
// density offsets and volume-scale offsets, a smooth deformation noise
// field, and measurement noise on the exported segment measurements.
struct PhantomSpec {
    Dims dims{64, 64, 64};
    Spacing spacing{1.0, 1.0, 1.0};
    std::vector<PhantomRegion> regions;
    PhantomRegion heart; // envelope; its density/slopes describe "other" tissue
    double background_density = -200.0;

    double texture_sigma = 8.0;          // HU
    int texture_modes = 6;
    double voxel_noise_sigma = 5.0;      // HU, per subject per voxel
    double density_noise_sigma = 12.0;   // HU, per subject per region
    double scale_noise_sigma = 0.055;    // per subject per region
    double deform_noise_amplitude = 0.01; // voxels
    double volume_measurement_noise = 0.03;  // relative
    double density_measurement_noise = 1.0;  // HU

    int cohort_size = 200;
    double age_min_years = 50.0;
    double age_max_years = 65.0;
    std::uint64_t seed = 1;

    void validate() const;
};

// 64^3 isotropic spec with six regions proxying LV/RV/LA/RA/MYO/Aorta and
// noise levels placing the age-prediction ceiling near R^2 = 0.5.
PhantomSpec default_phantom_spec();

constexpr int kPhantomRegions = 7; // six named + other

struct PhantomTemplate {
    Volume density;     // base values + texture
    LabelVolume labels; // 1..6 named regions, 7 = other heart tissue, 0 background
    std::array<std::int64_t, kPhantomRegions> region_voxels{};
    std::array<double, kPhantomRegions> region_mean_density{};
};

// Deterministic per seed. Throws ConfigError when region falloff supports
// overlap (the deformation model requires separated regions).
PhantomTemplate generate_template(const PhantomSpec& spec);

struct SubjectRecord {
    std::string id;
    int age_months = 0;
    Volume density;
    DeformationField field;

    // noiseless generative values, six named regions + other
    std::array<double, kPhantomRegions> gt_volume_ml{};
    std::array<double, kPhantomRegions> gt_mean_density_hu{};
    std::array<double, kPhantomRegions> region_scale{};
    // segmentation-style measurements (with measurement noise), named only
    std::array<double, 6> meas_volume_ml{};
    std::array<double, 6> meas_mean_density_hu{};

    double age_years() const { return age_months / 12.0; }
};

// Subject seed is derived from (spec.seed, subject_index), so cohorts can be
// generated in any order or in parallel.
SubjectRecord generate_subject(const PhantomTemplate& tmpl, const PhantomSpec& spec,
                               int subject_index, int age_months);

// Cohort ages at whole-month resolution, uniform over the spec range.
std::vector<int> sample_ages(const PhantomSpec& spec);

// Rasterizes the subject-space segments implied by the per-region scales
// (each ellipsoid scaled about its center). Used for measurement oracles.
LabelVolume rasterize_subject_segments(const PhantomSpec& spec, const SubjectRecord& subject);

// Writes template volumes, per-subject density/field files and manifest.csv
// into out_dir; the manifest alone is sufficient to run the pipeline.
void generate_cohort(const PhantomSpec& spec, const std::string& out_dir, int threads = 1);

// Smooth separable low-frequency field with roughly unit amplitude.
Volume smooth_field(Dims dims, Spacing spacing, std::uint64_t seed, int n_modes, int max_freq);

} // namespace svmorph
