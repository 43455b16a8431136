#pragma once

#include <cstdint>
#include <vector>

namespace svmorph {

struct Dims {
    int nx = 0, ny = 0, nz = 0;

    std::size_t voxels() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(nz);
    }
    bool operator==(const Dims&) const = default;
};

struct Spacing {
    double sx = 1.0, sy = 1.0, sz = 1.0;
    bool operator==(const Spacing&) const = default;
};

// Dense 3D scalar grid, x-fastest storage order. Values are HU for density
// volumes and dimensionless for JacDet / saliency volumes. Data is held in
// double precision; files store float32 (see nrrd.h).
struct Volume {
    Dims dims;
    Spacing spacing;
    std::vector<double> data;

    Volume() = default;
    Volume(Dims d, Spacing s, double fill = 0.0)
        : dims(d), spacing(s), data(d.voxels(), fill) {}

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims.nx) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(dims.ny) * static_cast<std::size_t>(z));
    }
    double& at(int x, int y, int z) { return data[index(x, y, z)]; }
    double at(int x, int y, int z) const { return data[index(x, y, z)]; }

    // Throws DataError if dims/spacing/data violate the type invariants.
    void validate(const char* what = "volume") const;
};

// Integer label grid; label 0 is reserved for background/excluded voxels.
struct LabelVolume {
    Dims dims;
    Spacing spacing;
    std::vector<std::int32_t> data;

    LabelVolume() = default;
    LabelVolume(Dims d, Spacing s, std::int32_t fill = 0)
        : dims(d), spacing(s), data(d.voxels(), fill) {}

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims.nx) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(dims.ny) * static_cast<std::size_t>(z));
    }
    std::int32_t& at(int x, int y, int z) { return data[index(x, y, z)]; }
    std::int32_t at(int x, int y, int z) const { return data[index(x, y, z)]; }

    void validate(const char* what = "label volume") const;
};

// Per-voxel displacement u(x) in mm, mapping template coordinates to subject
// coordinates via x -> x + u(x). Stored as 3 values per voxel, component
// fastest (matches the dimension-4 file layout with the vector axis first).
struct DeformationField {
    Dims dims;
    Spacing spacing;
    std::vector<double> data; // 3 * voxels, (ux, uy, uz) per voxel

    DeformationField() = default;
    DeformationField(Dims d, Spacing s)
        : dims(d), spacing(s), data(3 * d.voxels(), 0.0) {}

    std::size_t index(int x, int y, int z) const {
        return 3 * (static_cast<std::size_t>(x) +
                    static_cast<std::size_t>(dims.nx) *
                        (static_cast<std::size_t>(y) +
                         static_cast<std::size_t>(dims.ny) * static_cast<std::size_t>(z)));
    }
    double* at(int x, int y, int z) { return data.data() + index(x, y, z); }
    const double* at(int x, int y, int z) const { return data.data() + index(x, y, z); }

    void validate(const char* what = "deformation field") const;
};

// Voxel-wise CT value transform: clamp to [-300, 200] then divide by 300,
// giving outputs in [-1, 2/3]. Rejects non-finite voxels.
Volume clamp_transform(const Volume& v);

// Per-voxel determinant of the Jacobian of x -> x + u(x), with derivatives
// taken in physical (mm) coordinates: central differences in the interior,
// one-sided on boundary faces. Requires dims >= 2 along every axis.
Volume jacobian_determinant(const DeformationField& f, int threads = 1);

} // namespace svmorph
