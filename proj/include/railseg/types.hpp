#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace railseg {

// Point labels. 255 marks points without ground truth.
enum class Label : uint8_t {
    background = 0,
    rail = 1,
    unlabeled = 255,
};

struct Point {
    double x = 0.0;  // meters, sensor at origin, x forward
    double y = 0.0;
    double z = 0.0;
    double intensity = 0.0;  // reflectance, normalized to [0,1] at ingestion
    Label label = Label::unlabeled;

    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

// One LiDAR sweep. `orig_index` maps each point back to its index in the
// frame it was derived from (empty = identity); cropping fills it so voxel
// predictions can be projected onto the full original cloud.
struct Frame {
    std::vector<Point> points;
    std::vector<int32_t> orig_index;
    int64_t frame_id = 0;

    size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }

    int32_t original_index_of(size_t i) const {
        return orig_index.empty() ? static_cast<int32_t>(i) : orig_index[i];
    }
};

// Cuboid inspection area; membership is x_min < x <= x_max (and likewise per
// axis).
struct InspectionRegion {
    double x_min = 6.5, x_max = 70.0;
    double y_min = -30.0, y_max = 30.0;
    double z_min = -5.5, z_max = 7.0;

    bool valid() const { return x_min < x_max && y_min < y_max && z_min < z_max; }

    bool contains(const Point& p) const {
        return p.x > x_min && p.x <= x_max && p.y > y_min && p.y <= y_max && p.z > z_min &&
               p.z <= z_max;
    }
};

struct PolarPoint {
    double alpha = 0.0;  // pitch angle, radians
    double beta = 0.0;   // horizontal angle, radians
    double r = 0.0;      // range, meters
    double intensity = 0.0;
    Label label = Label::unlabeled;
};

struct AugmentParams {
    double z_rotation = 0.0;                      // radians
    double scale[3] = {1.0, 1.0, 1.0};            // per-axis factors
    double noise_sigma = 0.0;                     // meters, std per coordinate
    uint64_t rng_seed = 0;
};

struct IngestReport {
    size_t kept = 0;
    size_t dropped_nonfinite = 0;
    size_t clamped_intensity = 0;
};

constexpr double deg_to_rad(double deg) { return deg * 3.14159265358979323846 / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / 3.14159265358979323846; }

}  // namespace railseg
