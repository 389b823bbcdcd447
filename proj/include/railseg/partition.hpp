#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "railseg/types.hpp"

namespace railseg {

enum class PartitionMode { pyramid, cube };

// Cell layout of the voxelization. Pyramid mode bins (pitch, horizontal,
// range); cube mode bins Cartesian (x, y, z) over the inspection region.
struct PartitionConfig {
    double alpha_min = deg_to_rad(-20.0);
    double alpha_max = deg_to_rad(20.0);
    double beta_min = deg_to_rad(-32.5);
    double beta_max = deg_to_rad(32.5);
    double r_min = 0.0;
    double r_max = 80.0;
    double d_alpha = deg_to_rad(0.3);
    double d_beta = deg_to_rad(0.5);
    double d_r = 0.5;
    PartitionMode mode = PartitionMode::pyramid;
    // cube mode: cell sizes in meters and the binning origin (region min corner)
    std::array<double, 3> cube_cell = {0.5, 0.5, 0.5};
    InspectionRegion cube_region;
    // distance metric for picking the representative point; normalized divides
    // each axis offset by its cell size
    bool normalized_corner_distance = true;

    void validate() const;
};

struct VoxelIndex {
    int32_t l = 0;  // pitch axis (x axis in cube mode)
    int32_t w = 0;  // horizontal axis (y axis in cube mode)
    int32_t h = 0;  // range axis (z axis in cube mode)

    bool operator==(const VoxelIndex&) const = default;
};

struct VoxelGrid {
    int32_t dim_pitch = 0;
    int32_t dim_horiz = 0;
    int32_t dim_range = 0;

    int64_t cell_count() const {
        return int64_t(dim_pitch) * int64_t(dim_horiz) * int64_t(dim_range);
    }
    uint64_t pack(const VoxelIndex& v) const {
        return (uint64_t(v.l) * uint64_t(dim_horiz) + uint64_t(v.w)) * uint64_t(dim_range) +
               uint64_t(v.h);
    }
    VoxelIndex unpack(uint64_t key) const {
        VoxelIndex v;
        v.h = int32_t(key % uint64_t(dim_range));
        key /= uint64_t(dim_range);
        v.w = int32_t(key % uint64_t(dim_horiz));
        v.l = int32_t(key / uint64_t(dim_horiz));
        return v;
    }
};

// Number of cells per axis: ceil(span / cell), except quotients within 1e-9 of
// an integer which stay at that integer.
VoxelGrid grid_dims(const PartitionConfig& config);

// Floor binning with 0-based indices; values exactly at the upper bound clamp
// to the last cell. nullopt = outside the partition extent.
std::optional<VoxelIndex> assign_voxel(const PolarPoint& p, const PartitionConfig& config);
std::optional<VoxelIndex> assign_voxel_cube(const Point& p, const PartitionConfig& config);

// One occupied voxel: member point indices (order follows the input frame),
// the representative chosen by downsample(), and the majority label.
struct VoxelRecord {
    VoxelIndex index;
    std::vector<int32_t> members;       // indices into the partitioned frame
    int32_t representative = -1;
    Label label = Label::unlabeled;
};

struct PointVoxelMap {
    VoxelGrid grid;
    std::vector<VoxelRecord> voxels;               // sorted by packed voxel key
    std::vector<int32_t> point_to_voxel;           // per point: voxel slot or -1
    size_t out_of_partition = 0;

    size_t occupied() const { return voxels.size(); }
};

// Buckets every in-partition point into its voxel. Points outside the extent
// are counted, not binned. Pyramid mode consumes the polar view; cube mode the
// Cartesian frame.
PointVoxelMap group_points(const Frame& frame, const std::vector<PolarPoint>& polar,
                           const PartitionConfig& config);

// Picks the member nearest the voxel's minimum corner (cell-normalized
// distance by default), ties to the smallest point index.
void downsample(PointVoxelMap& map, const Frame& frame, const std::vector<PolarPoint>& polar,
                const PartitionConfig& config);

// Majority vote: rail wins only with strictly more rail than background
// members; unlabeled members do not count.
void label_voxels(PointVoxelMap& map, const Frame& frame);

Label majority_label(const std::vector<int32_t>& members, const Frame& frame);

// Diagnostic table of the occupied voxels: index, member count,
// representative point index, label.
void write_voxel_table(const std::string& path, const PointVoxelMap& map);

}  // namespace railseg
