#include "railseg/geometry.hpp"

#include <cmath>
#include <cstdio>

#include "railseg/common.hpp"

namespace railseg {

Frame crop_frame(const Frame& frame, const InspectionRegion& region) {
    if (!region.valid()) fail_usage("crop_frame: inspection region has min >= max");
    Frame out;
    out.frame_id = frame.frame_id;
    out.points.reserve(frame.size());
    out.orig_index.reserve(frame.size());
    for (size_t i = 0; i < frame.size(); ++i) {
        const Point& p = frame.points[i];
        if (region.contains(p)) {
            out.points.push_back(p);
            out.orig_index.push_back(frame.original_index_of(i));
        }
    }
    return out;
}

PolarPoint to_polar(const Point& p) {
    const double xy = std::sqrt(p.x * p.x + p.y * p.y);
    const double r = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    if (r == 0.0) fail_usage("to_polar: point at the origin has no direction");
    PolarPoint pp;
    pp.alpha = std::atan2(p.z, xy);
    pp.beta = std::atan2(p.y, p.x);
    pp.r = r;
    pp.intensity = p.intensity;
    pp.label = p.label;
    return pp;
}

Point polar_to_cartesian(const PolarPoint& pp) {
    Point p;
    const double ca = std::cos(pp.alpha);
    p.x = pp.r * ca * std::cos(pp.beta);
    p.y = pp.r * ca * std::sin(pp.beta);
    p.z = pp.r * std::sin(pp.alpha);
    p.intensity = pp.intensity;
    p.label = pp.label;
    return p;
}

std::vector<PolarPoint> to_polar(const Frame& frame) {
    std::vector<PolarPoint> out;
    out.reserve(frame.size());
    for (const Point& p : frame.points) out.push_back(to_polar(p));
    return out;
}

Frame augment(const Frame& frame, const AugmentParams& params) {
    // larger-than-default transforms are allowed but flagged once
    static bool warned = false;
    const bool in_defaults = std::abs(params.z_rotation) <= deg_to_rad(5.0) + 1e-12 &&
                             params.scale[0] >= 0.95 && params.scale[0] <= 1.05 &&
                             params.scale[1] >= 0.95 && params.scale[1] <= 1.05 &&
                             params.scale[2] >= 0.95 && params.scale[2] <= 1.05;
    if (!in_defaults && !warned) {
        std::fprintf(stderr,
                     "augment: parameters outside the training defaults "
                     "(|rot| <= 5 deg, scale in [0.95, 1.05])\n");
        warned = true;
    }
    Frame out = frame;
    const double c = std::cos(params.z_rotation);
    const double s = std::sin(params.z_rotation);
    Rng rng(params.rng_seed);
    for (Point& p : out.points) {
        const double rx = c * p.x - s * p.y;
        const double ry = s * p.x + c * p.y;
        p.x = rx * params.scale[0];
        p.y = ry * params.scale[1];
        p.z = p.z * params.scale[2];
        if (params.noise_sigma > 0.0) {
            p.x += rng.normal(0.0, params.noise_sigma);
            p.y += rng.normal(0.0, params.noise_sigma);
            p.z += rng.normal(0.0, params.noise_sigma);
        }
    }
    return out;
}

Frame sanitize_frame(const Frame& frame, IngestReport* report) {
    Frame out;
    out.frame_id = frame.frame_id;
    out.points.reserve(frame.size());
    IngestReport local;
    for (size_t i = 0; i < frame.size(); ++i) {
        Point p = frame.points[i];
        if (!p.finite() || !std::isfinite(p.intensity)) {
            ++local.dropped_nonfinite;
            continue;
        }
        if (p.intensity < 0.0 || p.intensity > 1.0) {
            p.intensity = p.intensity < 0.0 ? 0.0 : 1.0;
            ++local.clamped_intensity;
        }
        out.points.push_back(p);
        out.orig_index.push_back(frame.original_index_of(i));
    }
    local.kept = out.size();
    if (report) *report = local;
    return out;
}

}  // namespace railseg
