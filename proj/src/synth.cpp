#include "railseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "railseg/common.hpp"

namespace railseg {

const char* topology_name(Topology t) {
    switch (t) {
        case Topology::straight: return "straight";
        case Topology::curve: return "curve";
        case Topology::crossed: return "crossed";
        case Topology::multi: return "multi";
    }
    return "straight";
}

Topology topology_from_name(const std::string& name) {
    if (name == "straight") return Topology::straight;
    if (name == "curve") return Topology::curve;
    if (name == "crossed") return Topology::crossed;
    if (name == "multi") return Topology::multi;
    fail_usage("unknown topology: " + name);
}

double TrackCenterline::lateral_distance(double x, double y) const {
    if (!is_arc) {
        const double nx = -std::sin(heading);
        const double ny = std::cos(heading);
        return std::abs((x - x0) * nx + (y - y0) * ny);
    }
    const double dx = x - cx;
    const double dy = y - cy;
    const double d = std::sqrt(dx * dx + dy * dy);
    double ang = std::atan2(dy, dx);
    // normalize into the arc's parameter range; outside the range the track
    // does not exist there, report a large distance
    const double lo = std::min(angle_begin, angle_end);
    const double hi = std::max(angle_begin, angle_end);
    while (ang < lo - 1e-12) ang += 2.0 * 3.14159265358979323846;
    if (ang < lo || ang > hi) {
        // distance to the nearer arc endpoint
        const double ex0 = cx + radius * std::cos(angle_begin);
        const double ey0 = cy + radius * std::sin(angle_begin);
        const double ex1 = cx + radius * std::cos(angle_end);
        const double ey1 = cy + radius * std::sin(angle_end);
        const double d0 = std::hypot(x - ex0, y - ey0);
        const double d1 = std::hypot(x - ex1, y - ey1);
        return std::min(d0, d1);
    }
    return std::abs(d - radius);
}

namespace {

constexpr double kPi = 3.14159265358979323846;

// Smooth pseudo-random height field: a few incommensurate sinusoid products.
struct RoughField {
    double amplitude = 0.0;
    double phase[6] = {0, 0, 0, 0, 0, 0};

    static RoughField make(double amplitude, Rng& rng) {
        RoughField f;
        f.amplitude = amplitude;
        for (double& p : f.phase) p = rng.uniform(0.0, 2.0 * kPi);
        return f;
    }

    double eval(double x, double y) const {
        if (amplitude <= 0.0) return 0.0;
        const double a = std::sin(0.31 * x + phase[0]) * std::sin(0.47 * y + phase[1]);
        const double b = std::sin(0.11 * x + phase[2]) * std::sin(0.089 * y + phase[3]);
        const double c = std::sin(0.73 * x + phase[4]) * std::sin(1.21 * y + phase[5]);
        return amplitude * (0.5 * a + 0.35 * b + 0.15 * c);
    }
};

// One rail as a box in track-local coordinates: lateral band around the rail
// centerline offset, z band above the bed.
struct RailWall {
    const TrackCenterline* track;
    double lateral_offset;  // signed offset from track center (+-gauge/2)
    double half_width;
    double z_lo, z_hi;
};

struct Pole {
    double x, y, radius, z_lo, z_hi;
};

struct Blob {
    double x, y, z, radius;
};

struct Hit {
    double t = -1.0;
    int material = -1;  // 0 ground, 1 rail, 2 clutter
    bool valid() const { return t > 0.0; }
};

void consider(Hit& best, double t, int material) {
    if (t > 1e-6 && (!best.valid() || t < best.t)) best = {t, material};
}

// Ray in 3D from the origin.
struct Ray {
    double dx, dy, dz;
    double px(double t) const { return t * dx; }
    double py(double t) const { return t * dy; }
    double pz(double t) const { return t * dz; }
};

struct Scene {
    std::vector<TrackCenterline> tracks;
    std::vector<RailWall> rails;
    std::vector<Pole> poles;
    std::vector<Blob> blobs;
    RoughField rough;
    double ground_z = -2.2;   // nominal plane
    double bed_height = 0.3;
    double bed_half_width_full = 1.7;  // full-height pad inside this lateral distance
    double bed_half_width_zero = 2.3;  // pad ramps to zero here
    double corridor_half = 0.775;
    double max_range = 200.0;

    double pad_profile(double lateral) const {
        if (lateral <= bed_half_width_full) return bed_height;
        if (lateral >= bed_half_width_zero) return 0.0;
        return bed_height * (bed_half_width_zero - lateral) /
               (bed_half_width_zero - bed_half_width_full);
    }

    double ground_height(double x, double y) const {
        double h = ground_z + rough.eval(x, y);
        double pad = 0.0;
        for (const TrackCenterline& t : tracks)
            pad = std::max(pad, pad_profile(t.lateral_distance(x, y)));
        return h + pad;
    }

    double min_lateral(double x, double y) const {
        double best = 1e30;
        for (const TrackCenterline& t : tracks)
            best = std::min(best, t.lateral_distance(x, y));
        return best;
    }
};

// March-then-bisect: find the first t where the ray passes below the ground
// surface. Rays are shallow, so the march keeps steps small in height.
bool intersect_ground(const Scene& scene, const Ray& ray, double t_max, double& t_hit) {
    if (ray.dz >= -1e-9) return false;
    const double top = scene.ground_z + scene.rough.amplitude + scene.bed_height + 1e-3;
    const double bottom = scene.ground_z - scene.rough.amplitude - 1e-3;
    double t0 = top / ray.dz;       // first possible contact
    const double t1 = bottom / ray.dz;  // past this the ray is below everything
    if (t0 < 0.0) t0 = 0.0;
    if (t0 > t_max) return false;
    const double t_end = std::min(t1, t_max);

    auto f = [&](double t) {
        return ray.pz(t) - scene.ground_height(ray.px(t), ray.py(t));
    };
    const int steps = 24;
    const double dt = (t_end - t0) / steps;
    double prev_t = t0;
    double prev_f = f(t0);
    if (prev_f <= 0.0) {
        t_hit = t0;
        return true;
    }
    for (int i = 1; i <= steps; ++i) {
        const double t = t0 + i * dt;
        const double ft = f(t);
        if (ft <= 0.0) {
            double lo = prev_t, hi = t;
            for (int it = 0; it < 30; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (f(mid) > 0.0) lo = mid;
                else hi = mid;
            }
            t_hit = 0.5 * (lo + hi);
            return true;
        }
        prev_t = t;
        prev_f = ft;
    }
    return false;
}

// Slab interval of the ray inside [lo, hi] on a linear function a + b*t.
bool linear_band_interval(double a, double b, double lo, double hi, double& t0, double& t1) {
    if (std::abs(b) < 1e-12) {
        if (a < lo || a > hi) return false;
        t0 = -1e30;
        t1 = 1e30;
        return true;
    }
    double ta = (lo - a) / b;
    double tb = (hi - a) / b;
    if (ta > tb) std::swap(ta, tb);
    t0 = ta;
    t1 = tb;
    return true;
}

void intersect_rail(const Scene& scene, const RailWall& wall, const Ray& ray, Hit& best) {
    // z slab
    double tz0, tz1;
    if (!linear_band_interval(0.0, ray.dz, wall.z_lo, wall.z_hi, tz0, tz1)) return;

    const TrackCenterline& track = *wall.track;
    if (!track.is_arc) {
        const double nx = -std::sin(track.heading);
        const double ny = std::cos(track.heading);
        const double a = (0.0 - track.x0) * nx + (0.0 - track.y0) * ny - wall.lateral_offset;
        const double b = ray.dx * nx + ray.dy * ny;
        double tl0, tl1;
        if (!linear_band_interval(a, b, -wall.half_width, wall.half_width, tl0, tl1)) return;
        const double enter = std::max(tz0, tl0);
        const double exit = std::min(tz1, tl1);
        if (enter < exit && exit > 0.0) consider(best, std::max(enter, 1e-6), 1);
        return;
    }

    // arc rail: annular band between radii R +- half_width around the offset
    // circle
    const double radius = track.radius + wall.lateral_offset;  // signed offset folded in
    if (radius <= 0.0) return;
    const double r_in = radius - wall.half_width;
    const double r_out = radius + wall.half_width;
    const double ox = -track.cx;
    const double oy = -track.cy;
    const double A = ray.dx * ray.dx + ray.dy * ray.dy;
    if (A < 1e-12) return;
    const double B = 2.0 * (ox * ray.dx + oy * ray.dy);
    const double C0 = ox * ox + oy * oy;

    auto circle_interval = [&](double r, double& t0, double& t1) {
        const double C = C0 - r * r;
        const double disc = B * B - 4.0 * A * C;
        if (disc < 0.0) return false;
        const double s = std::sqrt(disc);
        t0 = (-B - s) / (2.0 * A);
        t1 = (-B + s) / (2.0 * A);
        return true;
    };
    double to0, to1;
    if (!circle_interval(r_out, to0, to1)) return;
    double ti0, ti1;
    const bool has_inner = circle_interval(r_in, ti0, ti1);

    // candidate entry points of the annulus, nearest first
    double candidates[4];
    int n = 0;
    if (has_inner) {
        candidates[n++] = std::max(to0, tz0);
        if (ti1 > ti0) candidates[n++] = std::max(ti1, tz0);
    } else {
        candidates[n++] = std::max(to0, tz0);
    }
    std::sort(candidates, candidates + n);
    for (int i = 0; i < n; ++i) {
        const double t = candidates[i];
        if (t <= 0.0 || t > to1 || t > tz1) continue;
        // inside the band and inside the z slab at t?
        const double px = ray.px(t), py = ray.py(t), pz = ray.pz(t);
        const double d = std::hypot(px - track.cx, py - track.cy);
        if (d < r_in - 1e-9 || d > r_out + 1e-9) continue;
        if (pz < wall.z_lo - 1e-9 || pz > wall.z_hi + 1e-9) continue;
        // angular extent
        if (track.lateral_distance(px, py) > wall.half_width + 1e-6) continue;
        consider(best, t, 1);
        return;
    }
}

void intersect_pole(const Pole& pole, const Ray& ray, Hit& best) {
    const double A = ray.dx * ray.dx + ray.dy * ray.dy;
    if (A < 1e-12) return;
    const double ox = -pole.x, oy = -pole.y;
    const double B = 2.0 * (ox * ray.dx + oy * ray.dy);
    const double C = ox * ox + oy * oy - pole.radius * pole.radius;
    const double disc = B * B - 4.0 * A * C;
    if (disc < 0.0) return;
    const double s = std::sqrt(disc);
    const double t0 = (-B - s) / (2.0 * A);
    const double t1 = (-B + s) / (2.0 * A);
    double tz0, tz1;
    if (!linear_band_interval(0.0, ray.dz, pole.z_lo, pole.z_hi, tz0, tz1)) return;
    const double enter = std::max(t0, tz0);
    const double exit = std::min(t1, tz1);
    if (enter < exit && exit > 0.0) consider(best, std::max(enter, 1e-6), 2);
}

void intersect_blob(const Blob& blob, const Ray& ray, Hit& best) {
    const double ox = -blob.x, oy = -blob.y, oz = -blob.z;
    const double B = 2.0 * (ox * ray.dx + oy * ray.dy + oz * ray.dz);
    const double C = ox * ox + oy * oy + oz * oz - blob.radius * blob.radius;
    const double disc = B * B - 4.0 * C;
    if (disc < 0.0) return;
    const double s = std::sqrt(disc);
    consider(best, (-B - s) / 2.0, 2);
}

TrackCenterline make_line(double x0, double y0, double heading) {
    TrackCenterline t;
    t.is_arc = false;
    t.x0 = x0;
    t.y0 = y0;
    t.heading = heading;
    return t;
}

// Arc tangent to direction `heading` at (x0, y0), turning left (sign +1) or
// right (sign -1), covering `arc_len` meters forward.
TrackCenterline make_arc(double x0, double y0, double heading, double radius, int sign,
                         double arc_len) {
    TrackCenterline t;
    t.is_arc = true;
    t.radius = radius;
    t.cx = x0 - sign * radius * std::sin(heading);
    t.cy = y0 + sign * radius * std::cos(heading);
    const double a0 = std::atan2(y0 - t.cy, x0 - t.cx);
    const double sweep = arc_len / radius;
    t.angle_begin = a0;
    t.angle_end = a0 + sign * sweep;
    if (t.angle_begin > t.angle_end) std::swap(t.angle_begin, t.angle_end);
    return t;
}

Scene build_scene(const SceneSpec& spec, const SynthSettings& lidar, Rng& rng) {
    if (spec.topology != Topology::straight && spec.curve_radius < 50.0)
        fail_usage("generate_scene: curve radius below 50 m is degenerate");

    Scene scene;
    scene.ground_z = -lidar.sensor_height;
    scene.bed_height = lidar.bed_height;
    scene.corridor_half = lidar.corridor / 2.0;
    scene.max_range = lidar.max_range;
    scene.rough = RoughField::make(lidar.ground_roughness, rng);

    const double track_spacing = 4.75;
    const double scene_len = lidar.max_range * 1.2;

    auto add_parallel = [&](bool curved) {
        const int n = std::max(1, spec.num_tracks);
        const double base_off = rng.uniform(-2.5, 2.5) - 0.5 * track_spacing * (n - 1);
        const double heading = rng.uniform(-0.05, 0.05);
        const int sign = rng.uniform() < 0.5 ? -1 : 1;
        for (int i = 0; i < n; ++i) {
            const double off = base_off + i * track_spacing;
            const double x0 = -30.0;  // start behind the sensor
            if (curved) {
                // near-concentric arcs stay near-parallel
                const double radius =
                    std::max(100.0, spec.curve_radius - sign * i * track_spacing);
                scene.tracks.push_back(make_arc(x0, off, heading, radius, sign,
                                                scene_len + 60.0));
            } else {
                scene.tracks.push_back(make_line(x0, off, heading));
            }
        }
    };

    switch (spec.topology) {
        case Topology::straight:
            add_parallel(false);
            break;
        case Topology::curve:
            add_parallel(true);
            break;
        case Topology::multi:
            add_parallel(rng.uniform() < 0.4);
            break;
        case Topology::crossed: {
            // main track plus a branch sharing the tangent point
            const double heading = rng.uniform(-0.04, 0.04);
            const double y_off = rng.uniform(-1.0, 1.0);
            scene.tracks.push_back(make_line(-30.0, y_off, heading));
            const double split_x = rng.uniform(8.0, 25.0);
            const double split_y = y_off + (split_x + 30.0) * std::tan(heading);
            const int sign = rng.uniform() < 0.5 ? -1 : 1;
            scene.tracks.push_back(make_arc(split_x, split_y, heading, spec.curve_radius, sign,
                                            scene_len));
            break;
        }
    }

    // rails: two walls per track
    const double z_lo = scene.ground_z + scene.bed_height;
    const double z_hi = z_lo + lidar.rail_height;
    for (const TrackCenterline& t : scene.tracks) {
        for (const double side : {-1.0, 1.0}) {
            RailWall w;
            w.track = &t;
            w.lateral_offset = side * lidar.gauge / 2.0;
            w.half_width = lidar.rail_width / 2.0;
            w.z_lo = z_lo;
            w.z_hi = z_hi;
            scene.rails.push_back(w);
        }
    }

    // clutter: poles and blobs away from the tracks
    const int n_poles = int(std::lround(12 * lidar.clutter_density));
    const int n_blobs = int(std::lround(8 * lidar.clutter_density));
    auto clear_of_tracks = [&](double x, double y) { return scene.min_lateral(x, y) > 3.0; };
    for (int i = 0; i < n_poles; ++i) {
        for (int attempt = 0; attempt < 20; ++attempt) {
            const double x = rng.uniform(8.0, 120.0);
            const double y = rng.uniform(-40.0, 40.0);
            if (!clear_of_tracks(x, y)) continue;
            Pole p;
            p.x = x;
            p.y = y;
            p.radius = rng.uniform(0.05, 0.18);
            p.z_lo = scene.ground_z;
            p.z_hi = scene.ground_z + rng.uniform(2.0, 8.0);
            scene.poles.push_back(p);
            break;
        }
    }
    for (int i = 0; i < n_blobs; ++i) {
        for (int attempt = 0; attempt < 20; ++attempt) {
            const double x = rng.uniform(8.0, 100.0);
            const double y = rng.uniform(-35.0, 35.0);
            if (!clear_of_tracks(x, y)) continue;
            Blob b;
            b.x = x;
            b.y = y;
            b.radius = rng.uniform(0.2, 0.8);
            b.z = scene.ground_z + rng.uniform(0.2, 1.5);
            scene.blobs.push_back(b);
            break;
        }
    }
    return scene;
}

}  // namespace

Frame generate_scene(const SceneSpec& spec, const SynthSettings& lidar, SceneTruth* truth) {
    Rng rng(seed_stream(spec.seed, 0xa11ce));
    Scene scene = build_scene(spec, lidar, rng);

    const double alpha_half = deg_to_rad(lidar.pitch_fov_deg) / 2.0;
    const double beta_half = deg_to_rad(lidar.horiz_fov_deg) / 2.0;
    const int np = lidar.pitch_samples;
    const int nh = lidar.horiz_samples;
    const double da = 2.0 * alpha_half / np;
    const double db = 2.0 * beta_half / nh;

    Frame frame;
    frame.frame_id = int64_t(spec.seed);
    frame.points.reserve(size_t(np) * size_t(nh) / 2);
    if (truth) {
        truth->tracks = scene.tracks;
        truth->pre_noise.clear();
    }

    for (int i = 0; i < np; ++i) {
        for (int j = 0; j < nh; ++j) {
            // jittered angular sampling keeps FOV bounds exact
            const double alpha =
                -alpha_half + (i + 0.5) * da + rng.uniform(-0.45, 0.45) * da;
            const double beta = -beta_half + (j + 0.5) * db + rng.uniform(-0.45, 0.45) * db;
            Ray ray{std::cos(alpha) * std::cos(beta), std::cos(alpha) * std::sin(beta),
                    std::sin(alpha)};

            Hit best;
            double t_ground;
            if (intersect_ground(scene, ray, scene.max_range, t_ground))
                consider(best, t_ground, 0);
            if (ray.dz < 0.0)
                for (const RailWall& w : scene.rails) intersect_rail(scene, w, ray, best);
            for (const Pole& p : scene.poles) intersect_pole(p, ray, best);
            for (const Blob& b : scene.blobs) intersect_blob(b, ray, best);
            if (!best.valid() || best.t > scene.max_range) continue;

            const double tx = ray.px(best.t), ty = ray.py(best.t), tz = ray.pz(best.t);
            const bool is_rail_area = scene.min_lateral(tx, ty) <= scene.corridor_half;

            double intensity;
            if (best.material == 1) intensity = rng.uniform(0.70, 0.95);
            else if (best.material == 2) intensity = rng.uniform(0.25, 0.60);
            else intensity = rng.uniform(0.05, 0.35);

            const double t_noisy = best.t + rng.normal(0.0, lidar.range_noise);
            if (t_noisy <= 0.0 || t_noisy > scene.max_range) continue;

            Point p;
            p.x = ray.px(t_noisy);
            p.y = ray.py(t_noisy);
            p.z = ray.pz(t_noisy);
            p.intensity = intensity;
            p.label = is_rail_area ? Label::rail : Label::background;
            frame.points.push_back(p);
            if (truth) truth->pre_noise.push_back(Point{tx, ty, tz, intensity, p.label});
        }
    }
    return frame;
}

TopologyMix parse_mix(const std::string& text) {
    TopologyMix mix;
    std::string item;
    std::istringstream ss(text);
    while (std::getline(ss, item, ',')) {
        const size_t eq = item.find('=');
        if (eq == std::string::npos)
            fail_usage("mix: expected topology=weight, got '" + item + "'");
        const Topology topo = topology_from_name(item.substr(0, eq));
        double w = 0.0;
        try {
            w = std::stod(item.substr(eq + 1));
        } catch (const std::exception&) {
            fail_usage("mix: bad weight in '" + item + "'");
        }
        if (w < 0.0) fail_usage("mix: weights must be nonnegative");
        mix.push_back({topo, w});
    }
    double total = 0.0;
    for (const auto& [topo, w] : mix) total += w;
    if (mix.empty() || total <= 0.0) fail_usage("mix: no positive weights");
    return mix;
}

std::vector<DatasetFrameInfo> plan_dataset(int n_frames, const TopologyMix& mix, uint64_t seed) {
    if (n_frames < 1) fail_usage("plan_dataset: need at least one frame");
    double total = 0.0;
    for (const auto& [topo, w] : mix) total += w;

    std::vector<DatasetFrameInfo> plan;
    plan.reserve(size_t(n_frames));
    for (int i = 0; i < n_frames; ++i) {
        Rng rng(seed_stream(seed, uint64_t(i), 0x5ce11e));
        const double pick = rng.uniform(0.0, total);
        double acc = 0.0;
        Topology topo = mix.back().first;
        for (const auto& [t, w] : mix) {
            acc += w;
            if (pick < acc) {
                topo = t;
                break;
            }
        }
        DatasetFrameInfo info;
        info.topology = topo;
        info.scene.topology = topo;
        info.scene.seed = seed_stream(seed, uint64_t(i), 0xf7a3e);
        info.scene.curve_radius = rng.uniform(250.0, 1200.0);
        switch (topo) {
            case Topology::straight: info.scene.num_tracks = 1 + int(rng.below(2)); break;
            case Topology::curve: info.scene.num_tracks = 1 + int(rng.below(2)); break;
            case Topology::multi: info.scene.num_tracks = 2 + int(rng.below(2)); break;
            case Topology::crossed: info.scene.num_tracks = 2; break;
        }
        plan.push_back(info);
    }
    return plan;
}

}  // namespace railseg
