#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "railseg/common.hpp"

namespace railseg {

using Coord = std::array<int32_t, 3>;  // (pitch, horiz, range) voxel coordinates

// Active voxel sites with per-site feature vectors. Sites are kept sorted by
// packed coordinate, so tensors built from the same coordinate set are
// bit-identical regardless of insertion order.
struct SparseTensor {
    Coord dims = {0, 0, 0};
    int32_t channels = 0;
    std::vector<Coord> sites;        // sorted by pack()
    std::vector<double> features;    // [sites x channels]

    static uint64_t pack(const Coord& c, const Coord& dims) {
        return (uint64_t(c[0]) * uint64_t(dims[1]) + uint64_t(c[1])) * uint64_t(dims[2]) +
               uint64_t(c[2]);
    }

    size_t site_count() const { return sites.size(); }
    double* feature(size_t row) { return features.data() + row * size_t(channels); }
    const double* feature(size_t row) const { return features.data() + row * size_t(channels); }

    // Sorts sites canonically and builds the coordinate lookup. Duplicate
    // coordinates are a contract violation.
    void finalize();

    int32_t row_of(const Coord& c) const {
        auto it = lookup_.find(pack(c, dims));
        return it == lookup_.end() ? -1 : it->second;
    }

    bool finite() const {
        for (double v : features)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    std::unordered_map<uint64_t, int32_t> lookup_;
};

}  // namespace railseg
