#include "svmorph/phantom.h"

#include <cmath>
#include <filesystem>
#include <random>

#include "svmorph/csv.h"
#include "svmorph/errors.h"
#include "svmorph/features.h"
#include "svmorph/nrrd.h"
#include "svmorph/parallel.h"

namespace svmorph {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t subject_seed(std::uint64_t cohort_seed, int subject_index) {
    return splitmix64(cohort_seed ^ splitmix64(static_cast<std::uint64_t>(subject_index) + 1));
}

double normal(std::mt19937_64& rng) {
    // Box-Muller on explicit uniforms keeps the stream compiler-independent.
    double u1 = 0.0;
    do {
        u1 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    } while (u1 <= 0.0);
    const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (static_cast<double>(rng() >> 11) * 0x1.0p-53) * (hi - lo);
}

// Normalized ellipsoid radius of x for region r.
double rho_of(const PhantomRegion& r, double x, double y, double z) {
    const double dx = (x - r.center[0]) / r.semi_axes[0];
    const double dy = (y - r.center[1]) / r.semi_axes[1];
    const double dz = (z - r.center[2]) / r.semi_axes[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Deformation weight: 1 inside the region and a ~2-voxel plateau beyond it,
// then a smoothstep down to 0 at ~4 voxels outside the surface. Distances
// are approximated as (rho - 1) times the local ellipsoid radius.
constexpr double kPlateauVoxels = 2.0;
constexpr double kSupportVoxels = 4.0;

double falloff_weight(const PhantomRegion& r, double x, double y, double z) {
    const double rho = rho_of(r, x, y, z);
    if (rho <= 1.0) return 1.0;
    const double dx = x - r.center[0], dy = y - r.center[1], dz = z - r.center[2];
    const double dist_center = std::sqrt(dx * dx + dy * dy + dz * dz);
    const double dist_surface = dist_center * (1.0 - 1.0 / rho);
    if (dist_surface <= kPlateauVoxels) return 1.0;
    if (dist_surface >= kSupportVoxels) return 0.0;
    const double t = (dist_surface - kPlateauVoxels) / (kSupportVoxels - kPlateauVoxels);
    return 1.0 - t * t * (3.0 - 2.0 * t);
}

double as_float(double v) { return static_cast<double>(static_cast<float>(v)); }

} // namespace

void PhantomSpec::validate() const {
    if (dims.nx < 8 || dims.ny < 8 || dims.nz < 8)
        throw ConfigError("phantom: dims must be >= 8 along every axis");
    if (!(spacing.sx > 0.0) || !(spacing.sy > 0.0) || !(spacing.sz > 0.0))
        throw ConfigError("phantom: spacing must be > 0");
    if (regions.size() != 6) throw ConfigError("phantom: exactly six named regions required");
    for (const auto& r : regions)
        for (double a : r.semi_axes)
            if (!(a > 0.0)) throw ConfigError("phantom: region semi-axes must be > 0");
    for (double a : heart.semi_axes)
        if (!(a > 0.0)) throw ConfigError("phantom: heart semi-axes must be > 0");
    if (!(age_max_years > age_min_years))
        throw ConfigError("phantom: age range must be non-degenerate");
    if (cohort_size < 1) throw ConfigError("phantom: cohort_size must be >= 1");
}

PhantomSpec default_phantom_spec() {
    PhantomSpec spec;
    spec.regions = {
        {"lv", {16, 16, 17}, {10.2, 10.2, 11.2}, 300.0, -0.8, -0.002},
        {"rv", {47, 16, 17}, {10.15, 9.2, 11.15}, 280.0, -0.5, -0.001},
        {"la", {16, 47, 46}, {9.0, 9.2, 9.65}, 290.0, 0.9, 0.004},
        {"ra", {47, 47, 46}, {9.0, 9.0, 10.0}, 270.0, 0.4, 0.004},
        {"myo", {31.5, 16, 47}, {11.0, 10.9, 8.9}, 80.0, 1.2, -0.003},
        {"aorta", {31.5, 47, 15}, {8.0, 8.1, 11.2}, 320.0, 1.0, 0.005},
    };
    spec.heart = {"other", {31.5, 31.5, 31.5}, {29.0, 29.0, 29.0}, -20.0, -0.6, 0.0};
    return spec;
}

PhantomTemplate generate_template(const PhantomSpec& spec) {
    spec.validate();
    const Dims d = spec.dims;

    PhantomTemplate t;
    t.labels = LabelVolume(d, spec.spacing, 0);
    t.density = Volume(d, spec.spacing, 0.0);

    const Volume texture =
        smooth_field(d, spec.spacing, splitmix64(spec.seed ^ 0x7e47u), spec.texture_modes, 3);

    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const std::size_t i = t.labels.index(x, y, z);
                int inside = 0, support = 0;
                for (std::size_t r = 0; r < spec.regions.size(); ++r) {
                    if (rho_of(spec.regions[r], x, y, z) <= 1.0) {
                        inside = static_cast<int>(r) + 1;
                    }
                    if (falloff_weight(spec.regions[r], x, y, z) > 0.0) ++support;
                }
                if (support > 1)
                    throw ConfigError("phantom: regions (or their falloff shells) overlap near (" +
                                      std::to_string(x) + "," + std::to_string(y) + "," +
                                      std::to_string(z) + ")");
                double base = spec.background_density;
                if (inside > 0) {
                    t.labels.data[i] = inside;
                    base = spec.regions[static_cast<std::size_t>(inside - 1)].base_density;
                } else if (rho_of(spec.heart, x, y, z) <= 1.0) {
                    t.labels.data[i] = kPhantomRegions; // other
                    base = spec.heart.base_density;
                }
                t.density.data[i] =
                    as_float(base + spec.texture_sigma * texture.data[i]);
            }

    for (std::size_t i = 0; i < t.labels.data.size(); ++i) {
        const std::int32_t lab = t.labels.data[i];
        if (lab > 0) {
            ++t.region_voxels[static_cast<std::size_t>(lab - 1)];
            t.region_mean_density[static_cast<std::size_t>(lab - 1)] += t.density.data[i];
        }
    }
    for (int r = 0; r < kPhantomRegions; ++r) {
        if (t.region_voxels[static_cast<std::size_t>(r)] == 0)
            throw ConfigError("phantom: region " +
                              (r < 6 ? spec.regions[static_cast<std::size_t>(r)].name
                                     : std::string("other")) +
                              " contains no voxels");
        t.region_mean_density[static_cast<std::size_t>(r)] /=
            static_cast<double>(t.region_voxels[static_cast<std::size_t>(r)]);
    }
    return t;
}

std::vector<int> sample_ages(const PhantomSpec& spec) {
    spec.validate();
    const int min_m = static_cast<int>(std::lround(spec.age_min_years * 12.0));
    const int max_m = static_cast<int>(std::lround(spec.age_max_years * 12.0));
    std::mt19937_64 rng(splitmix64(spec.seed ^ 0xa9e5u));
    std::vector<int> ages(static_cast<std::size_t>(spec.cohort_size));
    for (auto& a : ages)
        a = min_m + static_cast<int>(rng() % static_cast<std::uint64_t>(max_m - min_m + 1));
    return ages;
}

SubjectRecord generate_subject(const PhantomTemplate& tmpl, const PhantomSpec& spec,
                               int subject_index, int age_months) {
    const Dims d = spec.dims;
    std::mt19937_64 rng(subject_seed(spec.seed, subject_index));

    const double mean_age = 0.5 * (spec.age_min_years + spec.age_max_years);
    const double delta_age = age_months / 12.0 - mean_age;

    SubjectRecord s;
    s.id = "subj" + std::to_string(subject_index);
    s.age_months = age_months;

    // Per-region generative draws. Order is fixed so the stream is stable.
    std::array<double, kPhantomRegions> dens_offset{};
    std::array<double, kPhantomRegions> scale{};
    for (int r = 0; r < kPhantomRegions; ++r) {
        const bool named = r < 6;
        const double dslope =
            named ? spec.regions[static_cast<std::size_t>(r)].density_slope : spec.heart.density_slope;
        const double vslope =
            named ? spec.regions[static_cast<std::size_t>(r)].volume_slope : spec.heart.volume_slope;
        dens_offset[static_cast<std::size_t>(r)] =
            dslope * delta_age + spec.density_noise_sigma * normal(rng);
        scale[static_cast<std::size_t>(r)] =
            1.0 + vslope * delta_age + spec.scale_noise_sigma * normal(rng);
    }
    s.region_scale = scale;

    // Density: template + region offsets + voxel noise.
    s.density = Volume(d, spec.spacing, 0.0);
    for (std::size_t i = 0; i < s.density.data.size(); ++i) {
        const std::int32_t lab = tmpl.labels.data[i];
        double v = tmpl.density.data[i];
        if (lab > 0) v += dens_offset[static_cast<std::size_t>(lab - 1)];
        v += spec.voxel_noise_sigma * normal(rng);
        s.density.data[i] = as_float(v);
    }

    // Deformation: per-region radial scaling about the center (exact inside
    // the plateau) plus a smooth global noise field per component.
    const std::uint64_t noise_seed = splitmix64(subject_seed(spec.seed, subject_index) ^ 0xdefu);
    Volume noise[3] = {
        smooth_field(d, spec.spacing, splitmix64(noise_seed ^ 1), 4, 2),
        smooth_field(d, spec.spacing, splitmix64(noise_seed ^ 2), 4, 2),
        smooth_field(d, spec.spacing, splitmix64(noise_seed ^ 3), 4, 2),
    };
    const double sp[3] = {spec.spacing.sx, spec.spacing.sy, spec.spacing.sz};
    s.field = DeformationField(d, spec.spacing);
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                double u[3] = {0.0, 0.0, 0.0};
                for (std::size_t r = 0; r < spec.regions.size(); ++r) {
                    const double w = falloff_weight(spec.regions[r], x, y, z);
                    if (w <= 0.0) continue;
                    const double g = (scale[r] - 1.0) * w;
                    u[0] += g * (x - spec.regions[r].center[0]) * sp[0];
                    u[1] += g * (y - spec.regions[r].center[1]) * sp[1];
                    u[2] += g * (z - spec.regions[r].center[2]) * sp[2];
                }
                const std::size_t i = tmpl.labels.index(x, y, z);
                double* uv = s.field.at(x, y, z);
                uv[0] = as_float(u[0] + spec.deform_noise_amplitude * sp[0] * noise[0].data[i]);
                uv[1] = as_float(u[1] + spec.deform_noise_amplitude * sp[1] * noise[1].data[i]);
                uv[2] = as_float(u[2] + spec.deform_noise_amplitude * sp[2] * noise[2].data[i]);
            }

    // Ground truth from the generative parameters; measurements add noise.
    const double voxel_ml = sp[0] * sp[1] * sp[2] / 1000.0;
    for (int r = 0; r < kPhantomRegions; ++r) {
        const double s3 = scale[static_cast<std::size_t>(r)] * scale[static_cast<std::size_t>(r)] *
                          scale[static_cast<std::size_t>(r)];
        s.gt_volume_ml[static_cast<std::size_t>(r)] =
            static_cast<double>(tmpl.region_voxels[static_cast<std::size_t>(r)]) * voxel_ml * s3;
        s.gt_mean_density_hu[static_cast<std::size_t>(r)] =
            tmpl.region_mean_density[static_cast<std::size_t>(r)] +
            dens_offset[static_cast<std::size_t>(r)];
    }
    for (int r = 0; r < 6; ++r) {
        s.meas_volume_ml[static_cast<std::size_t>(r)] =
            s.gt_volume_ml[static_cast<std::size_t>(r)] *
            (1.0 + spec.volume_measurement_noise * normal(rng));
        s.meas_mean_density_hu[static_cast<std::size_t>(r)] =
            s.gt_mean_density_hu[static_cast<std::size_t>(r)] +
            spec.density_measurement_noise * normal(rng);
    }
    return s;
}

LabelVolume rasterize_subject_segments(const PhantomSpec& spec, const SubjectRecord& subject) {
    LabelVolume out(spec.dims, spec.spacing, 0);
    for (int z = 0; z < spec.dims.nz; ++z)
        for (int y = 0; y < spec.dims.ny; ++y)
            for (int x = 0; x < spec.dims.nx; ++x)
                for (std::size_t r = 0; r < spec.regions.size(); ++r) {
                    PhantomRegion scaled = spec.regions[r];
                    for (int a = 0; a < 3; ++a)
                        scaled.semi_axes[static_cast<std::size_t>(a)] *= subject.region_scale[r];
                    if (rho_of(scaled, x, y, z) <= 1.0) {
                        out.at(x, y, z) = static_cast<std::int32_t>(r) + 1;
                        break;
                    }
                }
    return out;
}

Volume smooth_field(Dims dims, Spacing spacing, std::uint64_t seed, int n_modes, int max_freq) {
    std::mt19937_64 rng(seed);
    struct Mode {
        double amp, fx, fy, fz, px, py, pz;
    };
    std::vector<Mode> modes(static_cast<std::size_t>(n_modes));
    for (auto& m : modes) {
        m.amp = normal(rng) / std::sqrt(static_cast<double>(n_modes));
        m.fx = 1.0 + std::floor(uniform(rng, 0.0, static_cast<double>(max_freq)));
        m.fy = 1.0 + std::floor(uniform(rng, 0.0, static_cast<double>(max_freq)));
        m.fz = 1.0 + std::floor(uniform(rng, 0.0, static_cast<double>(max_freq)));
        m.px = uniform(rng, 0.0, 2.0 * M_PI);
        m.py = uniform(rng, 0.0, 2.0 * M_PI);
        m.pz = uniform(rng, 0.0, 2.0 * M_PI);
    }

    Volume out(dims, spacing, 0.0);
    for (int z = 0; z < dims.nz; ++z)
        for (int y = 0; y < dims.ny; ++y)
            for (int x = 0; x < dims.nx; ++x) {
                double v = 0.0;
                for (const auto& m : modes)
                    v += m.amp * std::cos(2.0 * M_PI * m.fx * x / dims.nx + m.px) *
                         std::cos(2.0 * M_PI * m.fy * y / dims.ny + m.py) *
                         std::cos(2.0 * M_PI * m.fz * z / dims.nz + m.pz);
                out.at(x, y, z) = v;
            }
    return out;
}

void generate_cohort(const PhantomSpec& spec, const std::string& out_dir, int threads) {
    spec.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/subjects");

    const PhantomTemplate tmpl = generate_template(spec);
    save_volume(tmpl.density, out_dir + "/template_density.nrrd");
    save_volume(tmpl.labels, out_dir + "/template_labels.nrrd");

    const std::vector<int> ages = sample_ages(spec);

    std::vector<std::vector<std::string>> rows(static_cast<std::size_t>(spec.cohort_size));
    parallel_for(static_cast<std::size_t>(spec.cohort_size), threads, [&](std::size_t i) {
        const SubjectRecord s =
            generate_subject(tmpl, spec, static_cast<int>(i), ages[i]);
        const std::string density_rel = "subjects/" + s.id + "_density.nrrd";
        const std::string field_rel = "subjects/" + s.id + "_field.nrrd";
        save_volume(s.density, out_dir + "/" + density_rel);
        save_volume(s.field, out_dir + "/" + field_rel);

        std::vector<std::string> row = {s.id, csv_int(s.age_months), density_rel, field_rel};
        for (int r = 0; r < 6; ++r) row.push_back(csv_num(s.meas_volume_ml[static_cast<std::size_t>(r)]));
        for (int r = 0; r < 6; ++r)
            row.push_back(csv_num(s.meas_mean_density_hu[static_cast<std::size_t>(r)]));
        for (int r = 0; r < kPhantomRegions; ++r)
            row.push_back(csv_num(s.gt_volume_ml[static_cast<std::size_t>(r)]));
        for (int r = 0; r < kPhantomRegions; ++r)
            row.push_back(csv_num(s.gt_mean_density_hu[static_cast<std::size_t>(r)]));
        rows[i] = std::move(row);
    });

    CsvTable manifest;
    manifest.header = {"id", "age_months", "density", "field"};
    const char* region_names[kPhantomRegions] = {"lv", "rv", "la", "ra", "myo", "aorta", "other"};
    for (int r = 0; r < 6; ++r)
        manifest.header.push_back(std::string("meas_vol_") + region_names[r] + "_ml");
    for (int r = 0; r < 6; ++r)
        manifest.header.push_back(std::string("meas_dens_") + region_names[r] + "_hu");
    for (int r = 0; r < kPhantomRegions; ++r)
        manifest.header.push_back(std::string("gt_vol_") + region_names[r] + "_ml");
    for (int r = 0; r < kPhantomRegions; ++r)
        manifest.header.push_back(std::string("gt_dens_") + region_names[r] + "_hu");
    manifest.rows = std::move(rows);
    write_csv(out_dir + "/manifest.csv", manifest);
}

} // namespace svmorph
