#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "svmorph/volume.h"

namespace svmorph {

struct SlicParams {
    int grid_size = 14;      // voxels per initial-centroid spacing side
    double proximity = 0.2;  // spatial proximity factor m
    int max_iters = 10;
    std::uint64_t seed = 0;  // reserved for deterministic tie-breaking

    void validate() const;
};

// Partition of a template volume into K supervoxels. Labels run 1..K with
// 0 reserved for excluded voxels; sizes[k] is the voxel count of label k
// (sizes[0] unused).
struct SupervoxelMap {
    LabelVolume labels;
    int count = 0;
    std::vector<std::int64_t> sizes;
};

// 3D SLIC over a clamp-transformed volume. Centroids start on a regular
// lattice with spacing ~grid_size voxels; voxels are assigned to the nearest
// centroid within a 2S search window under
//   D^2 = d_c^2 + m^2 * (d_s / S)^2
// with d_c the intensity difference and d_s the Euclidean index distance.
// Iterates until assignment changes fall below 0.1% of eligible voxels or
// max_iters, then merges disconnected fragments into the dominant adjacent
// supervoxel and relabels densely. If a mask is given, only voxels with
// mask > 0 are eligible; others keep label 0.
SupervoxelMap slic_segment(const Volume& v, const LabelVolume* mask, const SlicParams& p,
                           int threads = 1);

void save_supervoxels(const SupervoxelMap& sv, const std::string& labels_path,
                      const std::string& sizes_csv_path);
SupervoxelMap load_supervoxels(const std::string& labels_path);

} // namespace svmorph
