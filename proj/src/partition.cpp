#include "railseg/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "railseg/common.hpp"

namespace railseg {

namespace {

// ceil(span/cell), but an exact integer quotient (within 1e-9) is not rounded
// up further.
int32_t axis_dim(double span, double cell) {
    if (!(cell > 0.0)) fail_usage("partition: cell size must be positive");
    if (!(span > 0.0)) fail_usage("partition: axis span must be positive");
    const double q = span / cell;
    const double nearest = std::round(q);
    if (std::abs(q - nearest) < 1e-9) return static_cast<int32_t>(nearest);
    return static_cast<int32_t>(std::ceil(q));
}

// floor((v - lo)/cell) clamped to [0, dim-1]; nullopt outside [lo, hi].
std::optional<int32_t> axis_bin(double v, double lo, double hi, double cell, int32_t dim) {
    if (v < lo || v > hi) return std::nullopt;
    int32_t idx = static_cast<int32_t>(std::floor((v - lo) / cell));
    if (idx < 0) idx = 0;
    if (idx >= dim) idx = dim - 1;
    return idx;
}

}  // namespace

void PartitionConfig::validate() const {
    if (mode == PartitionMode::pyramid) {
        if (!(d_alpha > 0.0 && d_beta > 0.0 && d_r > 0.0))
            fail_usage("partition: cell sizes must be positive");
        if (!(alpha_max > alpha_min && beta_max > beta_min && r_max > r_min))
            fail_usage("partition: extents must be positive");
        if (d_alpha > alpha_max - alpha_min || d_beta > beta_max - beta_min ||
            d_r > r_max - r_min)
            fail_usage("partition: cell size exceeds axis span");
    } else {
        if (!(cube_cell[0] > 0.0 && cube_cell[1] > 0.0 && cube_cell[2] > 0.0))
            fail_usage("partition: cube cell sizes must be positive");
        if (!cube_region.valid()) fail_usage("partition: cube region has min >= max");
    }
}

VoxelGrid grid_dims(const PartitionConfig& config) {
    config.validate();
    VoxelGrid g;
    if (config.mode == PartitionMode::pyramid) {
        g.dim_pitch = axis_dim(config.alpha_max - config.alpha_min, config.d_alpha);
        g.dim_horiz = axis_dim(config.beta_max - config.beta_min, config.d_beta);
        g.dim_range = axis_dim(config.r_max - config.r_min, config.d_r);
    } else {
        const InspectionRegion& r = config.cube_region;
        g.dim_pitch = axis_dim(r.x_max - r.x_min, config.cube_cell[0]);
        g.dim_horiz = axis_dim(r.y_max - r.y_min, config.cube_cell[1]);
        g.dim_range = axis_dim(r.z_max - r.z_min, config.cube_cell[2]);
    }
    return g;
}

std::optional<VoxelIndex> assign_voxel(const PolarPoint& p, const PartitionConfig& config) {
    const VoxelGrid g = grid_dims(config);
    auto l = axis_bin(p.alpha, config.alpha_min, config.alpha_max, config.d_alpha, g.dim_pitch);
    auto w = axis_bin(p.beta, config.beta_min, config.beta_max, config.d_beta, g.dim_horiz);
    auto h = axis_bin(p.r, config.r_min, config.r_max, config.d_r, g.dim_range);
    if (!l || !w || !h) return std::nullopt;
    return VoxelIndex{*l, *w, *h};
}

std::optional<VoxelIndex> assign_voxel_cube(const Point& p, const PartitionConfig& config) {
    const VoxelGrid g = grid_dims(config);
    const InspectionRegion& r = config.cube_region;
    auto l = axis_bin(p.x, r.x_min, r.x_max, config.cube_cell[0], g.dim_pitch);
    auto w = axis_bin(p.y, r.y_min, r.y_max, config.cube_cell[1], g.dim_horiz);
    auto h = axis_bin(p.z, r.z_min, r.z_max, config.cube_cell[2], g.dim_range);
    if (!l || !w || !h) return std::nullopt;
    return VoxelIndex{*l, *w, *h};
}

PointVoxelMap group_points(const Frame& frame, const std::vector<PolarPoint>& polar,
                           const PartitionConfig& config) {
    config.validate();
    if (config.mode == PartitionMode::pyramid && polar.size() != frame.size())
        fail_usage("group_points: polar view size does not match frame");

    PointVoxelMap map;
    map.grid = grid_dims(config);
    map.point_to_voxel.assign(frame.size(), -1);

    // key -> slot, slots created in first-touch order then sorted below
    std::unordered_map<uint64_t, int32_t> slot_of;
    slot_of.reserve(frame.size());

    for (size_t i = 0; i < frame.size(); ++i) {
        std::optional<VoxelIndex> idx =
            config.mode == PartitionMode::pyramid ? assign_voxel(polar[i], config)
                                                  : assign_voxel_cube(frame.points[i], config);
        if (!idx) {
            ++map.out_of_partition;
            continue;
        }
        const uint64_t key = map.grid.pack(*idx);
        auto [it, inserted] = slot_of.try_emplace(key, int32_t(map.voxels.size()));
        if (inserted) {
            VoxelRecord rec;
            rec.index = *idx;
            map.voxels.push_back(std::move(rec));
        }
        map.voxels[it->second].members.push_back(int32_t(i));
        map.point_to_voxel[i] = it->second;
    }

    // canonical order: sort voxels by packed key, remap point_to_voxel
    std::vector<int32_t> order(map.voxels.size());
    for (size_t s = 0; s < order.size(); ++s) order[s] = int32_t(s);
    std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
        return map.grid.pack(map.voxels[a].index) < map.grid.pack(map.voxels[b].index);
    });
    std::vector<int32_t> new_slot(map.voxels.size());
    std::vector<VoxelRecord> sorted;
    sorted.reserve(map.voxels.size());
    for (size_t s = 0; s < order.size(); ++s) {
        new_slot[order[s]] = int32_t(s);
        sorted.push_back(std::move(map.voxels[order[s]]));
    }
    map.voxels = std::move(sorted);
    for (int32_t& slot : map.point_to_voxel)
        if (slot >= 0) slot = new_slot[slot];
    return map;
}

void downsample(PointVoxelMap& map, const Frame& frame, const std::vector<PolarPoint>& polar,
                const PartitionConfig& config) {
    const bool pyramid = config.mode == PartitionMode::pyramid;
    const double sa = pyramid ? config.d_alpha : config.cube_cell[0];
    const double sb = pyramid ? config.d_beta : config.cube_cell[1];
    const double sr = pyramid ? config.d_r : config.cube_cell[2];

    for (VoxelRecord& rec : map.voxels) {
        // minimum corner of the cell
        double ca, cb, cr;
        if (pyramid) {
            ca = config.alpha_min + rec.index.l * config.d_alpha;
            cb = config.beta_min + rec.index.w * config.d_beta;
            cr = config.r_min + rec.index.h * config.d_r;
        } else {
            ca = config.cube_region.x_min + rec.index.l * config.cube_cell[0];
            cb = config.cube_region.y_min + rec.index.w * config.cube_cell[1];
            cr = config.cube_region.z_min + rec.index.h * config.cube_cell[2];
        }
        int32_t best = -1;
        double best_d2 = 0.0;
        for (int32_t m : rec.members) {
            double da, db, dr;
            if (pyramid) {
                da = polar[m].alpha - ca;
                db = polar[m].beta - cb;
                dr = polar[m].r - cr;
            } else {
                da = frame.points[m].x - ca;
                db = frame.points[m].y - cb;
                dr = frame.points[m].z - cr;
            }
            if (config.normalized_corner_distance) {
                da /= sa;
                db /= sb;
                dr /= sr;
            }
            const double d2 = da * da + db * db + dr * dr;
            if (best < 0 || d2 < best_d2) {
                best = m;
                best_d2 = d2;
            }
            // ties keep the earlier (smaller) index: members are in frame order
        }
        rec.representative = best;
    }
}

Label majority_label(const std::vector<int32_t>& members, const Frame& frame) {
    size_t rail = 0, background = 0;
    for (int32_t m : members) {
        const Label l = frame.points[m].label;
        if (l == Label::rail) ++rail;
        else if (l == Label::background) ++background;
    }
    if (rail == 0 && background == 0) return Label::unlabeled;
    return rail > background ? Label::rail : Label::background;
}

void label_voxels(PointVoxelMap& map, const Frame& frame) {
    for (VoxelRecord& rec : map.voxels) rec.label = majority_label(rec.members, frame);
}

void write_voxel_table(const std::string& path, const PointVoxelMap& map) {
    std::ofstream out(path);
    if (!out) fail_data("voxel table: cannot open for writing: " + path);
    out << "pitch,horiz,range,members,representative,label\n";
    for (const VoxelRecord& rec : map.voxels)
        out << rec.index.l << "," << rec.index.w << "," << rec.index.h << ","
            << rec.members.size() << "," << rec.representative << ","
            << unsigned(rec.label) << "\n";
    if (!out) fail_data("voxel table: write failed: " + path);
}

}  // namespace railseg
