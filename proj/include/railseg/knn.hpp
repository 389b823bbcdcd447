#pragma once

#include <cstdint>
#include <vector>

#include "railseg/types.hpp"

namespace railseg {

struct Neighbor {
    int32_t index = -1;   // index into the support set
    double dist = 0.0;    // Euclidean distance to the query
};

// Exact nearest-neighbor search over a fixed support set (x-y-z). Results are
// sorted by (distance, index); equal distances resolve to the smaller index.
// Immutable after construction; concurrent queries are safe.
class KnnIndex {
public:
    explicit KnnIndex(const std::vector<Point>& support);

    // Exactly k results when the support allows; smaller supports are padded
    // by repeating the farthest neighbor found.
    std::vector<Neighbor> query(const Point& center, int k) const;
    void query(const Point& center, int k, std::vector<Neighbor>& out) const;

    size_t size() const { return xs_.size(); }

private:
    struct Node {
        int32_t left = -1;
        int32_t right = -1;
        int32_t begin = 0;  // leaf: range into order_
        int32_t end = 0;
        double split = 0.0;
        int8_t axis = -1;   // -1 marks a leaf
    };

    int32_t build(int32_t begin, int32_t end, int depth);
    void search(int32_t node, const double q[3], int k,
                std::vector<Neighbor>& heap) const;

    double coord(int32_t point, int axis) const {
        return axis == 0 ? xs_[point] : (axis == 1 ? ys_[point] : zs_[point]);
    }

    std::vector<double> xs_, ys_, zs_;
    std::vector<int32_t> order_;  // permutation of point indices, leaf ranges
    std::vector<Node> nodes_;
    int32_t root_ = -1;
};

}  // namespace railseg
