#pragma once

#include <map>
#include <string>
#include <vector>

#include "railseg/config.hpp"
#include "railseg/types.hpp"

namespace railseg {

enum class Topology { straight, curve, crossed, multi };

const char* topology_name(Topology t);
Topology topology_from_name(const std::string& name);

// Plan-view track centerline: a straight line (heading from a start point) or
// a constant-radius arc. Arcs may start only at `s_begin` along the curve
// (switch branches).
struct TrackCenterline {
    bool is_arc = false;
    // line form
    double x0 = 0.0, y0 = 0.0, heading = 0.0;
    // arc form
    double cx = 0.0, cy = 0.0, radius = 0.0;
    double angle_begin = 0.0, angle_end = 0.0;  // arc parameter range

    // Unsigned lateral distance in the ground plan; longitudinal extent is
    // enforced for arcs only.
    double lateral_distance(double x, double y) const;
};

struct SceneSpec {
    Topology topology = Topology::straight;
    double curve_radius = 600.0;  // meters; < 50 is rejected
    int num_tracks = 1;           // parallel tracks for straight/curve/multi
    uint64_t seed = 0;
};

// Ground-truth retained next to the emitted frame: centerlines and the
// pre-noise hit points, so the corridor labeling rule can be re-derived
// exactly.
struct SceneTruth {
    std::vector<TrackCenterline> tracks;
    std::vector<Point> pre_noise;  // same order as the frame's points
};

// Casts one ray per angular sample against ground (with roughness and ballast
// pads), rail-head prisms and clutter; keeps the nearest hit, adds Gaussian
// range noise, and labels points by lateral corridor distance computed from
// the pre-noise geometry.
Frame generate_scene(const SceneSpec& scene, const SynthSettings& lidar,
                     SceneTruth* truth = nullptr);

struct DatasetFrameInfo {
    Topology topology;
    SceneSpec scene;
};

// Weighted topology mix, e.g. {straight: 0.4, curve: 0.4, crossed: 0.2}.
using TopologyMix = std::vector<std::pair<Topology, double>>;

TopologyMix parse_mix(const std::string& text);

// Draws per-frame scenes deterministically from `seed`; the returned specs
// feed generate_scene one by one (callers may generate frames in parallel).
std::vector<DatasetFrameInfo> plan_dataset(int n_frames, const TopologyMix& mix, uint64_t seed);

}  // namespace railseg
