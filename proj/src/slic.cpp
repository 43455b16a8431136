#include "svmorph/slic.h"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <deque>
#include <limits>

#include "svmorph/csv.h"
#include "svmorph/errors.h"
#include "svmorph/nrrd.h"
#include "svmorph/parallel.h"

namespace svmorph {

void SlicParams::validate() const {
    if (grid_size < 2) throw ConfigError("slic: grid_size must be >= 2");
    if (!(proximity > 0.0)) throw ConfigError("slic: proximity must be > 0");
    if (max_iters < 1) throw ConfigError("slic: max_iters must be >= 1");
}

namespace {

struct Centroid {
    double x, y, z;   // voxel-index coordinates
    double intensity;
    bool alive = true;
};

// Evenly spread k seed coordinates along an axis of n voxels, centered in
// equal blocks: (i + 0.5) * n / k - 0.5 in voxel-center coordinates.
std::vector<double> axis_seeds(int n, int grid_size) {
    const int k = std::max(1, static_cast<int>(std::floor(
                                  static_cast<double>(n) / grid_size + 0.5)));
    std::vector<double> pos(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i)
        pos[static_cast<std::size_t>(i)] = (i + 0.5) * static_cast<double>(n) / k - 0.5;
    return pos;
}

int clamp_int(int v, int lo, int hi) { return std::max(lo, std::min(hi, v)); }

// 26-neighborhood offsets.
std::vector<std::array<int, 3>> neighbor_offsets() {
    std::vector<std::array<int, 3>> offs;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
                if (dx || dy || dz) offs.push_back({dx, dy, dz});
    return offs;
}

} // namespace

SupervoxelMap slic_segment(const Volume& v, const LabelVolume* mask, const SlicParams& p,
                           int threads) {
    p.validate();
    v.validate("slic input");
    const Dims d = v.dims;
    if (mask && !(mask->dims == d))
        throw DataError("slic: mask dims do not match volume dims");
    if (p.grid_size > d.nx && p.grid_size > d.ny && p.grid_size > d.nz)
        throw ConfigError("slic: grid_size larger than every volume dimension");

    const std::size_t n_voxels = d.voxels();
    auto eligible = [&](std::size_t i) { return !mask || mask->data[i] > 0; };
    std::size_t n_eligible = 0;
    for (std::size_t i = 0; i < n_voxels; ++i)
        if (eligible(i)) ++n_eligible;
    if (n_eligible == 0) throw DataError("slic: empty eligible region");

    const double S = static_cast<double>(p.grid_size);
    const double m2_over_s2 = (p.proximity * p.proximity) / (S * S);

    // Initial centroid lattice, ids in x-fastest scan order.
    const auto sx = axis_seeds(d.nx, p.grid_size);
    const auto sy = axis_seeds(d.ny, p.grid_size);
    const auto sz = axis_seeds(d.nz, p.grid_size);
    std::vector<Centroid> centroids;
    centroids.reserve(sx.size() * sy.size() * sz.size());
    for (double cz : sz)
        for (double cy : sy)
            for (double cx : sx) {
                const int ix = clamp_int(static_cast<int>(std::lround(cx)), 0, d.nx - 1);
                const int iy = clamp_int(static_cast<int>(std::lround(cy)), 0, d.ny - 1);
                const int iz = clamp_int(static_cast<int>(std::lround(cz)), 0, d.nz - 1);
                centroids.push_back({cx, cy, cz, v.at(ix, iy, iz), true});
            }
    const int n_centroids = static_cast<int>(centroids.size());

    // assignment[i]: centroid id or -1
    std::vector<int> assignment(n_voxels, -1);
    std::vector<int> prev(n_voxels, -1);

    // Spatial buckets of cell size S for the candidate search.
    const int bx = static_cast<int>(d.nx / S) + 1;
    const int by = static_cast<int>(d.ny / S) + 1;
    const int bz = static_cast<int>(d.nz / S) + 1;
    auto bucket_of = [&](double x, double y, double z) {
        const int cx = clamp_int(static_cast<int>(std::floor(x / S)), 0, bx - 1);
        const int cy = clamp_int(static_cast<int>(std::floor(y / S)), 0, by - 1);
        const int cz = clamp_int(static_cast<int>(std::floor(z / S)), 0, bz - 1);
        return (static_cast<std::size_t>(cz) * by + cy) * bx + cx;
    };

    for (int iter = 0; iter < p.max_iters; ++iter) {
        std::vector<std::vector<int>> buckets(static_cast<std::size_t>(bx) * by * bz);
        for (int c = 0; c < n_centroids; ++c)
            if (centroids[c].alive)
                buckets[bucket_of(centroids[c].x, centroids[c].y, centroids[c].z)].push_back(c);

        std::atomic<std::size_t> changed{0};
        parallel_for_blocks(n_voxels, threads, [&](std::size_t lo, std::size_t hi) {
            std::size_t local_changed = 0;
            for (std::size_t i = lo; i < hi; ++i) {
                if (!eligible(i)) continue;
                const int x = static_cast<int>(i % d.nx);
                const int y = static_cast<int>((i / d.nx) % d.ny);
                const int z = static_cast<int>(i / (static_cast<std::size_t>(d.nx) * d.ny));
                const double intensity = v.data[i];

                // Candidates live in buckets within +-2 cells (covers the
                // 2S window in every direction). Best by (distance, id).
                double best_d = std::numeric_limits<double>::infinity();
                int best_c = -1;
                const int cbx = static_cast<int>(x / S);
                const int cby = static_cast<int>(y / S);
                const int cbz = static_cast<int>(z / S);
                for (int zz = std::max(0, cbz - 2); zz <= std::min(bz - 1, cbz + 2); ++zz)
                    for (int yy = std::max(0, cby - 2); yy <= std::min(by - 1, cby + 2); ++yy)
                        for (int xx = std::max(0, cbx - 2); xx <= std::min(bx - 1, cbx + 2); ++xx) {
                            const auto& cell =
                                buckets[(static_cast<std::size_t>(zz) * by + yy) * bx + xx];
                            for (int c : cell) {
                                const Centroid& ct = centroids[c];
                                if (std::abs(ct.x - x) > 2 * S || std::abs(ct.y - y) > 2 * S ||
                                    std::abs(ct.z - z) > 2 * S)
                                    continue;
                                const double dc = intensity - ct.intensity;
                                const double dsx = ct.x - x, dsy = ct.y - y, dsz = ct.z - z;
                                const double ds2 = dsx * dsx + dsy * dsy + dsz * dsz;
                                const double dist = dc * dc + m2_over_s2 * ds2;
                                if (dist < best_d || (dist == best_d && c < best_c)) {
                                    best_d = dist;
                                    best_c = c;
                                }
                            }
                        }
                if (best_c < 0) {
                    // No centroid within the window; fall back to a full scan.
                    for (int c = 0; c < n_centroids; ++c) {
                        const Centroid& ct = centroids[c];
                        if (!ct.alive) continue;
                        const double dc = intensity - ct.intensity;
                        const double dsx = ct.x - x, dsy = ct.y - y, dsz = ct.z - z;
                        const double ds2 = dsx * dsx + dsy * dsy + dsz * dsz;
                        const double dist = dc * dc + m2_over_s2 * ds2;
                        if (dist < best_d || (dist == best_d && c < best_c)) {
                            best_d = dist;
                            best_c = c;
                        }
                    }
                }
                assignment[i] = best_c;
                if (best_c != prev[i]) ++local_changed;
            }
            changed.fetch_add(local_changed);
        });

        // Update step: mean intensity/position per centroid. Grouping by
        // counting sort keeps per-centroid accumulation in ascending voxel
        // order, so the result does not depend on the thread count.
        std::vector<std::int64_t> counts(static_cast<std::size_t>(n_centroids) + 1, 0);
        for (std::size_t i = 0; i < n_voxels; ++i)
            if (assignment[i] >= 0) ++counts[static_cast<std::size_t>(assignment[i]) + 1];
        std::vector<std::int64_t> offsets(counts.size(), 0);
        for (std::size_t c = 1; c < counts.size(); ++c) offsets[c] = offsets[c - 1] + counts[c];
        std::vector<std::size_t> grouped(static_cast<std::size_t>(offsets.back()));
        {
            std::vector<std::int64_t> cursor(offsets.begin(), offsets.end() - 1);
            for (std::size_t i = 0; i < n_voxels; ++i)
                if (assignment[i] >= 0)
                    grouped[static_cast<std::size_t>(cursor[assignment[i]]++)] = i;
        }
        parallel_for(static_cast<std::size_t>(n_centroids), threads, [&](std::size_t c) {
            const std::int64_t lo = offsets[c], hi = offsets[c + 1];
            if (lo == hi) {
                centroids[c].alive = false;
                return;
            }
            double sum_x = 0, sum_y = 0, sum_z = 0, sum_i = 0;
            for (std::int64_t g = lo; g < hi; ++g) {
                const std::size_t i = grouped[static_cast<std::size_t>(g)];
                sum_x += static_cast<double>(i % d.nx);
                sum_y += static_cast<double>((i / d.nx) % d.ny);
                sum_z += static_cast<double>(i / (static_cast<std::size_t>(d.nx) * d.ny));
                sum_i += v.data[i];
            }
            const double n = static_cast<double>(hi - lo);
            centroids[c].x = sum_x / n;
            centroids[c].y = sum_y / n;
            centroids[c].z = sum_z / n;
            centroids[c].intensity = sum_i / n;
            centroids[c].alive = true;
        });

        prev = assignment;
        if (static_cast<double>(changed.load()) < 0.001 * static_cast<double>(n_eligible))
            break;
    }

    // --- Connectivity enforcement ---------------------------------------
    // Fragment each assignment label into 26-connected components; the
    // largest component keeps the label, orphan fragments are absorbed by
    // the adjacent region with the most voxels (resolved so far). Fragments
    // with no labeled neighbor become fresh supervoxels.
    const auto offs = neighbor_offsets();
    std::vector<int> comp(n_voxels, -1);
    std::vector<int> comp_label;
    std::vector<std::int64_t> comp_size;
    std::deque<std::size_t> queue;
    for (std::size_t i = 0; i < n_voxels; ++i) {
        if (assignment[i] < 0 || comp[i] >= 0) continue;
        const int id = static_cast<int>(comp_label.size());
        comp_label.push_back(assignment[i]);
        comp_size.push_back(0);
        comp[i] = id;
        queue.push_back(i);
        while (!queue.empty()) {
            const std::size_t cur = queue.front();
            queue.pop_front();
            ++comp_size[static_cast<std::size_t>(id)];
            const int x = static_cast<int>(cur % d.nx);
            const int y = static_cast<int>((cur / d.nx) % d.ny);
            const int z = static_cast<int>(cur / (static_cast<std::size_t>(d.nx) * d.ny));
            for (const auto& o : offs) {
                const int nx2 = x + o[0], ny2 = y + o[1], nz2 = z + o[2];
                if (nx2 < 0 || ny2 < 0 || nz2 < 0 || nx2 >= d.nx || ny2 >= d.ny || nz2 >= d.nz)
                    continue;
                const std::size_t ni = v.index(nx2, ny2, nz2);
                if (comp[ni] < 0 && assignment[ni] == assignment[i]) {
                    comp[ni] = id;
                    queue.push_back(ni);
                }
            }
        }
    }
    const int n_comps = static_cast<int>(comp_label.size());

    // Largest component per label is primary (ties: earliest component).
    std::vector<int> primary_comp(static_cast<std::size_t>(n_centroids), -1);
    for (int cid = 0; cid < n_comps; ++cid) {
        const int lab = comp_label[static_cast<std::size_t>(cid)];
        const int cur = primary_comp[static_cast<std::size_t>(lab)];
        if (cur < 0 || comp_size[static_cast<std::size_t>(cid)] >
                           comp_size[static_cast<std::size_t>(cur)])
            primary_comp[static_cast<std::size_t>(lab)] = cid;
    }

    // resolved[i]: final centroid-id region, or -1 while pending.
    std::vector<int> resolved(n_voxels, -1);
    std::vector<std::int64_t> region_size(static_cast<std::size_t>(n_centroids), 0);
    std::vector<std::vector<std::size_t>> comp_voxels(static_cast<std::size_t>(n_comps));
    for (std::size_t i = 0; i < n_voxels; ++i) {
        if (comp[i] < 0) continue;
        const int cid = comp[i];
        if (primary_comp[static_cast<std::size_t>(comp_label[static_cast<std::size_t>(cid)])] ==
            cid) {
            resolved[i] = comp_label[static_cast<std::size_t>(cid)];
            ++region_size[static_cast<std::size_t>(resolved[i])];
        } else {
            comp_voxels[static_cast<std::size_t>(cid)].push_back(i);
        }
    }

    std::vector<int> pending;
    for (int cid = 0; cid < n_comps; ++cid)
        if (!comp_voxels[static_cast<std::size_t>(cid)].empty()) pending.push_back(cid);

    bool progress = true;
    while (progress && !pending.empty()) {
        progress = false;
        std::vector<int> still_pending;
        for (int cid : pending) {
            const auto& voxels = comp_voxels[static_cast<std::size_t>(cid)];
            std::int64_t best_size = -1;
            int best_label = -1;
            for (std::size_t i : voxels) {
                const int x = static_cast<int>(i % d.nx);
                const int y = static_cast<int>((i / d.nx) % d.ny);
                const int z = static_cast<int>(i / (static_cast<std::size_t>(d.nx) * d.ny));
                for (const auto& o : offs) {
                    const int nx2 = x + o[0], ny2 = y + o[1], nz2 = z + o[2];
                    if (nx2 < 0 || ny2 < 0 || nz2 < 0 || nx2 >= d.nx || ny2 >= d.ny ||
                        nz2 >= d.nz)
                        continue;
                    const int lab = resolved[v.index(nx2, ny2, nz2)];
                    if (lab < 0) continue;
                    if (region_size[static_cast<std::size_t>(lab)] > best_size ||
                        (region_size[static_cast<std::size_t>(lab)] == best_size &&
                         lab < best_label)) {
                        best_size = region_size[static_cast<std::size_t>(lab)];
                        best_label = lab;
                    }
                }
            }
            if (best_label < 0) {
                still_pending.push_back(cid);
                continue;
            }
            for (std::size_t i : voxels) resolved[i] = best_label;
            region_size[static_cast<std::size_t>(best_label)] +=
                static_cast<std::int64_t>(voxels.size());
            progress = true;
        }
        pending = std::move(still_pending);
    }

    // Isolated fragments (no labeled neighbor at all) become new regions.
    int next_region = n_centroids;
    for (int cid : pending) {
        for (std::size_t i : comp_voxels[static_cast<std::size_t>(cid)]) resolved[i] = next_region;
        region_size.push_back(
            static_cast<std::int64_t>(comp_voxels[static_cast<std::size_t>(cid)].size()));
        ++next_region;
    }

    // Dense relabel 1..K in ascending region-id order.
    std::vector<int> dense(static_cast<std::size_t>(next_region), 0);
    int k = 0;
    for (int r = 0; r < next_region; ++r)
        if (region_size[static_cast<std::size_t>(r)] > 0) dense[static_cast<std::size_t>(r)] = ++k;

    SupervoxelMap out;
    out.labels = LabelVolume(d, v.spacing, 0);
    out.count = k;
    out.sizes.assign(static_cast<std::size_t>(k) + 1, 0);
    for (std::size_t i = 0; i < n_voxels; ++i) {
        if (resolved[i] < 0) continue;
        const int lab = dense[static_cast<std::size_t>(resolved[i])];
        out.labels.data[i] = lab;
        ++out.sizes[static_cast<std::size_t>(lab)];
    }
    return out;
}

void save_supervoxels(const SupervoxelMap& sv, const std::string& labels_path,
                      const std::string& sizes_csv_path) {
    save_volume(sv.labels, labels_path);
    CsvTable t;
    t.header = {"label", "size"};
    for (int lab = 1; lab <= sv.count; ++lab)
        t.rows.push_back({csv_int(lab), csv_int(sv.sizes[static_cast<std::size_t>(lab)])});
    write_csv(sizes_csv_path, t);
}

SupervoxelMap load_supervoxels(const std::string& labels_path) {
    SupervoxelMap sv;
    sv.labels = load_label_volume(labels_path);
    std::int32_t max_label = 0;
    for (std::int32_t lab : sv.labels.data) max_label = std::max(max_label, lab);
    sv.count = max_label;
    sv.sizes.assign(static_cast<std::size_t>(max_label) + 1, 0);
    for (std::int32_t lab : sv.labels.data)
        if (lab > 0) ++sv.sizes[static_cast<std::size_t>(lab)];
    return sv;
}

} // namespace svmorph
