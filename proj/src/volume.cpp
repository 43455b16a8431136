#include "svmorph/volume.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "svmorph/errors.h"
#include "svmorph/parallel.h"

namespace svmorph {

namespace {

void check_grid(const Dims& dims, const Spacing& spacing, std::size_t data_len,
                std::size_t values_per_voxel, const char* what) {
    if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1)
        throw DataError(std::string(what) + ": dims must be >= 1 along every axis");
    if (!(spacing.sx > 0.0) || !(spacing.sy > 0.0) || !(spacing.sz > 0.0))
        throw ConfigError(std::string(what) + ": spacing must be > 0 along every axis");
    if (data_len != values_per_voxel * dims.voxels())
        throw DataError(std::string(what) + ": data length " + std::to_string(data_len) +
                        " does not match dims");
}

} // namespace

void Volume::validate(const char* what) const {
    check_grid(dims, spacing, data.size(), 1, what);
    for (double v : data)
        if (!std::isfinite(v))
            throw DataError(std::string(what) + ": non-finite voxel value");
}

void LabelVolume::validate(const char* what) const {
    check_grid(dims, spacing, data.size(), 1, what);
    for (std::int32_t v : data)
        if (v < 0) throw DataError(std::string(what) + ": negative label");
}

void DeformationField::validate(const char* what) const {
    check_grid(dims, spacing, data.size(), 3, what);
    for (double v : data)
        if (!std::isfinite(v))
            throw DataError(std::string(what) + ": non-finite displacement component");
}

Volume clamp_transform(const Volume& v) {
    Volume out(v.dims, v.spacing);
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        const double hu = v.data[i];
        if (!std::isfinite(hu))
            throw DataError("clamp_transform: non-finite input voxel at index " +
                            std::to_string(i));
        out.data[i] = std::min(200.0, std::max(-300.0, hu)) / 300.0;
    }
    return out;
}

Volume jacobian_determinant(const DeformationField& f, int threads) {
    const Dims d = f.dims;
    if (d.nx < 2 || d.ny < 2 || d.nz < 2)
        throw DataError("jacobian_determinant: field dims must be >= 2 along every axis");
    if (!(f.spacing.sx > 0.0) || !(f.spacing.sy > 0.0) || !(f.spacing.sz > 0.0))
        throw ConfigError("jacobian_determinant: degenerate spacing");

    Volume out(d, f.spacing);
    const double sp[3] = {f.spacing.sx, f.spacing.sy, f.spacing.sz};
    const int n[3] = {d.nx, d.ny, d.nz};

    // d(u_c)/d(axis) at voxel (x,y,z): central difference in the interior,
    // one-sided on the boundary faces, scaled to physical distance.
    auto derivative = [&](int x, int y, int z, int axis, int comp) -> double {
        int lo[3] = {x, y, z};
        int hi[3] = {x, y, z};
        const int i = lo[axis];
        if (i == 0) {
            hi[axis] = 1;
        } else if (i == n[axis] - 1) {
            lo[axis] = i - 1;
        } else {
            lo[axis] = i - 1;
            hi[axis] = i + 1;
        }
        const double num = f.at(hi[0], hi[1], hi[2])[comp] - f.at(lo[0], lo[1], lo[2])[comp];
        return num / ((hi[axis] - lo[axis]) * sp[axis]);
    };

    const std::size_t plane = static_cast<std::size_t>(d.nx) * static_cast<std::size_t>(d.ny);
    parallel_for(static_cast<std::size_t>(d.nz), threads, [&](std::size_t zi) {
        const int z = static_cast<int>(zi);
        for (int y = 0; y < d.ny; ++y) {
            for (int x = 0; x < d.nx; ++x) {
                // J = I + du/dx; rows are components, columns are axes.
                double j[3][3];
                for (int c = 0; c < 3; ++c)
                    for (int a = 0; a < 3; ++a)
                        j[c][a] = derivative(x, y, z, a, c) + (c == a ? 1.0 : 0.0);
                const double det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) -
                                   j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0]) +
                                   j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
                out.data[zi * plane + static_cast<std::size_t>(y) * d.nx + x] = det;
            }
        }
    });
    return out;
}

} // namespace svmorph
