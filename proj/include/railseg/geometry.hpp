#pragma once

#include "railseg/types.hpp"

namespace railseg {

// Keeps exactly the points inside `region` (strict lower bound, inclusive
// upper bound per axis). Point order is preserved and orig_index records each
// survivor's index in `frame`.
Frame crop_frame(const Frame& frame, const InspectionRegion& region);

// Cartesian -> (pitch, horizontal, range). Throws on the degenerate origin.
PolarPoint to_polar(const Point& p);

// Inverse of to_polar, for round-trip checks and diagnostics.
Point polar_to_cartesian(const PolarPoint& pp);

std::vector<PolarPoint> to_polar(const Frame& frame);

// Rotation about z, per-axis scaling, then i.i.d. Gaussian coordinate noise.
// Labels and intensity pass through. Deterministic for a given rng_seed.
Frame augment(const Frame& frame, const AugmentParams& params);

// Drops non-finite points and clamps intensity into [0,1]; applied once at
// ingestion.
Frame sanitize_frame(const Frame& frame, IngestReport* report = nullptr);

}  // namespace railseg
