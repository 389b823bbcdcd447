#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "railseg/common.hpp"
#include "railseg/geometry.hpp"
#include "railseg/partition.hpp"
#include "railseg/synth.hpp"

using namespace railseg;

namespace {

SynthSettings small_lidar() {
    SynthSettings s;
    s.pitch_samples = 100;
    s.horiz_samples = 260;
    return s;
}

SceneSpec straight_scene(uint64_t seed, int tracks = 1) {
    SceneSpec spec;
    spec.topology = Topology::straight;
    spec.num_tracks = tracks;
    spec.seed = seed;
    return spec;
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
    const SynthSettings lidar = small_lidar();
    Frame a = generate_scene(straight_scene(9), lidar);
    Frame b = generate_scene(straight_scene(9), lidar);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a.points[i].x == b.points[i].x);
        CHECK(a.points[i].y == b.points[i].y);
        CHECK(a.points[i].z == b.points[i].z);
        CHECK(a.points[i].intensity == b.points[i].intensity);
        CHECK(a.points[i].label == b.points[i].label);
    }
    Frame c = generate_scene(straight_scene(10), lidar);
    CHECK(a.size() != c.size());
}

TEST_CASE("all points stay inside the field of view and range") {
    const SynthSettings lidar = small_lidar();
    for (const Topology topo :
         {Topology::straight, Topology::curve, Topology::crossed, Topology::multi}) {
        SceneSpec spec;
        spec.topology = topo;
        spec.num_tracks = 2;
        spec.curve_radius = 400.0;
        spec.seed = 21 + int(topo);
        Frame f = generate_scene(spec, lidar);
        REQUIRE(f.size() > 1000);
        const double a_half = deg_to_rad(lidar.pitch_fov_deg) / 2 + 1e-9;
        const double b_half = deg_to_rad(lidar.horiz_fov_deg) / 2 + 1e-9;
        for (const Point& p : f.points) {
            const PolarPoint pp = to_polar(p);
            CHECK(std::abs(pp.alpha) <= a_half);
            CHECK(std::abs(pp.beta) <= b_half);
            CHECK(pp.r <= lidar.max_range + 1e-9);
        }
    }
}

TEST_CASE("labels reproduce the corridor rule from the pre-noise geometry") {
    const SynthSettings lidar = small_lidar();
    for (const Topology topo : {Topology::straight, Topology::curve, Topology::crossed}) {
        SceneSpec spec;
        spec.topology = topo;
        spec.curve_radius = 500.0;
        spec.num_tracks = 2;
        spec.seed = 31 + int(topo);
        SceneTruth truth;
        Frame f = generate_scene(spec, lidar, &truth);
        REQUIRE(truth.pre_noise.size() == f.size());
        for (size_t i = 0; i < f.size(); ++i) {
            double lat = 1e30;
            for (const TrackCenterline& t : truth.tracks)
                lat = std::min(lat,
                               t.lateral_distance(truth.pre_noise[i].x, truth.pre_noise[i].y));
            const Label want = lat <= lidar.corridor / 2.0 ? Label::rail : Label::background;
            REQUIRE(f.points[i].label == want);
        }
    }
}

TEST_CASE("zero-noise straight scene: rail labels stay within the corridor exactly") {
    SynthSettings lidar = small_lidar();
    lidar.range_noise = 0.0;
    lidar.ground_roughness = 0.0;
    SceneTruth truth;
    Frame f = generate_scene(straight_scene(5), lidar, &truth);
    REQUIRE(truth.tracks.size() == 1);
    for (size_t i = 0; i < f.size(); ++i) {
        const double lat = truth.tracks[0].lateral_distance(f.points[i].x, f.points[i].y);
        if (f.points[i].label == Label::rail) CHECK(lat <= lidar.corridor / 2.0 + 1e-9);
        else CHECK(lat > lidar.corridor / 2.0 - 1e-9);
    }
}

TEST_CASE("straight scene shows two rail-head lines separated by the gauge") {
    SynthSettings lidar = small_lidar();
    lidar.range_noise = 0.0;
    lidar.ground_roughness = 0.0;
    lidar.pitch_samples = 220;
    lidar.horiz_samples = 700;
    SceneTruth truth;
    Frame f = generate_scene(straight_scene(77), lidar, &truth);

    // rail-head hits carry the high-reflectance band
    std::vector<double> left, right;
    for (size_t i = 0; i < f.size(); ++i) {
        const Point& p = f.points[i];
        if (p.intensity < 0.7 || p.x < 8.0 || p.x > 30.0) continue;
        // signed side relative to the track center
        const TrackCenterline& t = truth.tracks[0];
        const double nx = -std::sin(t.heading), ny = std::cos(t.heading);
        const double side = (p.x - t.x0) * nx + (p.y - t.y0) * ny;
        if (side > 0) left.push_back(side);
        else right.push_back(side);
    }
    REQUIRE(left.size() > 20);
    REQUIRE(right.size() > 20);
    const double mean_left = std::accumulate(left.begin(), left.end(), 0.0) / left.size();
    const double mean_right = std::accumulate(right.begin(), right.end(), 0.0) / right.size();
    CHECK(mean_left - mean_right == doctest::Approx(1.435).epsilon(0.05));
}

TEST_CASE("default spec lands in the 20k-80k point band") {
    SynthSettings lidar;  // defaults: 160 x 420
    Frame f = generate_scene(straight_scene(3, 2), lidar);
    CHECK(f.size() >= 20000);
    CHECK(f.size() <= 80000);
}

TEST_CASE("near-field density exceeds far-field density by at least 5x") {
    const SynthSettings lidar = small_lidar();
    Frame f = generate_scene(straight_scene(13, 2), lidar);
    // points per 1 m^3 cell, averaged over occupied cells in a range band
    auto band_density = [&](double r_lo, double r_hi) {
        std::map<std::tuple<int, int, int>, int> cells;
        for (const Point& p : f.points) {
            const double r = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
            if (r < r_lo || r > r_hi) continue;
            cells[{int(std::floor(p.x)), int(std::floor(p.y)), int(std::floor(p.z))}]++;
        }
        if (cells.empty()) return 0.0;
        double total = 0;
        for (const auto& [cell, count] : cells) total += count;
        return total / double(cells.size());
    };
    const double near = band_density(8.0, 12.0);
    const double far = band_density(45.0, 55.0);
    REQUIRE(far > 0.0);
    CHECK(near >= 5.0 * far);
}

TEST_CASE("degenerate curve radius is rejected") {
    SceneSpec spec;
    spec.topology = Topology::curve;
    spec.curve_radius = 30.0;
    CHECK_THROWS_AS(generate_scene(spec, small_lidar()), Error);
}

TEST_CASE("dataset plan: single-topology mix and determinism") {
    const TopologyMix mix = parse_mix("straight=1.0");
    const auto plan = plan_dataset(10, mix, 4);
    REQUIRE(plan.size() == 10);
    for (const auto& info : plan) CHECK(info.topology == Topology::straight);

    const auto plan2 = plan_dataset(10, mix, 4);
    for (size_t i = 0; i < plan.size(); ++i)
        CHECK(plan[i].scene.seed == plan2[i].scene.seed);

    CHECK_THROWS_AS(plan_dataset(0, mix, 4), Error);
    CHECK_THROWS_AS(parse_mix("straight"), Error);
    CHECK_THROWS_AS(parse_mix(""), Error);
}

TEST_CASE("aggregate rail fraction of a mixed dataset sits in the expected band") {
    const TopologyMix mix = parse_mix("straight=0.4,curve=0.3,crossed=0.15,multi=0.15");
    const auto plan = plan_dataset(40, mix, 17);
    SynthSettings lidar = small_lidar();
    uint64_t rail = 0, total = 0;
    for (const auto& info : plan) {
        Frame f = generate_scene(info.scene, lidar);
        total += f.size();
        for (const Point& p : f.points) rail += p.label == Label::rail;
    }
    const double fraction = double(rail) / double(total);
    CHECK(fraction >= 0.05);
    CHECK(fraction <= 0.15);
}

TEST_CASE("pyramid cells balance per-voxel counts better than cubes") {
    // coefficient of variation of occupied-voxel member counts, pyramid vs a
    // cube grid calibrated to a comparable occupied-voxel count
    PartitionConfig pyramid;
    const SynthSettings lidar = small_lidar();
    const auto plan = plan_dataset(20, parse_mix("straight=0.5,curve=0.3,multi=0.2"), 23);

    auto cv_of = [](const PointVoxelMap& map) {
        double mean = 0;
        for (const VoxelRecord& v : map.voxels) mean += double(v.members.size());
        mean /= double(map.voxels.size());
        double var = 0;
        for (const VoxelRecord& v : map.voxels) {
            const double d = double(v.members.size()) - mean;
            var += d * d;
        }
        var /= double(map.voxels.size());
        return std::sqrt(var) / mean;
    };

    int pyramid_wins = 0;
    double cv_pyr_sum = 0, cv_cube_sum = 0;
    for (const auto& info : plan) {
        Frame raw = generate_scene(info.scene, lidar);
        Frame cropped = crop_frame(raw, InspectionRegion{});
        std::vector<PolarPoint> polar;
        polar.reserve(cropped.size());
        for (const Point& p : cropped.points) polar.push_back(to_polar(p));

        PointVoxelMap pmap = group_points(cropped, polar, pyramid);
        const size_t target = pmap.occupied();

        // calibrate the cube cell to land near the same occupied count
        PartitionConfig cube;
        cube.mode = PartitionMode::cube;
        cube.cube_region = InspectionRegion{};
        double lo = 0.05, hi = 4.0;
        PointVoxelMap cmap;
        for (int it = 0; it < 24; ++it) {
            const double cell = 0.5 * (lo + hi);
            cube.cube_cell = {cell, cell, cell};
            cmap = group_points(cropped, polar, cube);
            if (cmap.occupied() > target) lo = cell;
            else hi = cell;
            if (cmap.occupied() > target * 8 / 10 && cmap.occupied() < target * 12 / 10) break;
        }
        REQUIRE(cmap.occupied() > 0);
        const double cv_p = cv_of(pmap);
        const double cv_c = cv_of(cmap);
        cv_pyr_sum += cv_p;
        cv_cube_sum += cv_c;
        pyramid_wins += cv_p < cv_c;
    }
    CHECK(cv_pyr_sum < cv_cube_sum);   // statistical: mean CV lower
    CHECK(pyramid_wins >= 15);         // and in at least 3/4 of the frames
}
