#include "railseg/knn.hpp"

#include <algorithm>
#include <cmath>

#include "railseg/common.hpp"

namespace railseg {

namespace {

constexpr int kLeafSize = 16;

// heap entries ordered worst-first: larger distance first, larger index first
// on equal distance, so the heap top is the entry a better candidate displaces
struct HeapEntry {
    double d2;
    int32_t index;
    bool operator<(const HeapEntry& o) const {
        if (d2 != o.d2) return d2 < o.d2;
        return index < o.index;
    }
};

}  // namespace

KnnIndex::KnnIndex(const std::vector<Point>& support) {
    if (support.empty()) fail_usage("KnnIndex: support set is empty");
    const int32_t n = int32_t(support.size());
    xs_.resize(n);
    ys_.resize(n);
    zs_.resize(n);
    order_.resize(n);
    for (int32_t i = 0; i < n; ++i) {
        xs_[i] = support[i].x;
        ys_[i] = support[i].y;
        zs_[i] = support[i].z;
        order_[i] = i;
    }
    nodes_.reserve(size_t(2 * n / kLeafSize + 2));
    root_ = build(0, n, 0);
}

int32_t KnnIndex::build(int32_t begin, int32_t end, int depth) {
    Node node;
    if (end - begin <= kLeafSize) {
        node.begin = begin;
        node.end = end;
        nodes_.push_back(node);
        return int32_t(nodes_.size() - 1);
    }
    // split on the widest axis
    double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
    for (int32_t i = begin; i < end; ++i) {
        const int32_t p = order_[i];
        const double c[3] = {xs_[p], ys_[p], zs_[p]};
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], c[a]);
            hi[a] = std::max(hi[a], c[a]);
        }
    }
    int axis = 0;
    for (int a = 1; a < 3; ++a)
        if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
    if (hi[axis] - lo[axis] == 0.0) {
        // all points coincide; keep as one leaf
        node.begin = begin;
        node.end = end;
        nodes_.push_back(node);
        return int32_t(nodes_.size() - 1);
    }
    const int32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int32_t a, int32_t b) { return coord(a, axis) < coord(b, axis); });
    node.axis = int8_t(axis);
    node.split = coord(order_[mid], axis);
    const int32_t self = int32_t(nodes_.size());
    nodes_.push_back(node);
    const int32_t left = build(begin, mid, depth + 1);
    const int32_t right = build(mid, end, depth + 1);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
}

void KnnIndex::search(int32_t node_id, const double q[3], int k,
                      std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[node_id];
    auto worse = [](const Neighbor& a, const Neighbor& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.index < b.index;
    };
    if (node.axis < 0) {
        for (int32_t i = node.begin; i < node.end; ++i) {
            const int32_t p = order_[i];
            const double dx = xs_[p] - q[0];
            const double dy = ys_[p] - q[1];
            const double dz = zs_[p] - q[2];
            const Neighbor cand{p, dx * dx + dy * dy + dz * dz};
            if (int(heap.size()) < k) {
                heap.push_back(cand);
                std::push_heap(heap.begin(), heap.end(), worse);
            } else if (worse(cand, heap.front())) {
                std::pop_heap(heap.begin(), heap.end(), worse);
                heap.back() = cand;
                std::push_heap(heap.begin(), heap.end(), worse);
            }
        }
        return;
    }
    const double delta = q[node.axis] - node.split;
    const int32_t near = delta < 0.0 ? node.left : node.right;
    const int32_t far = delta < 0.0 ? node.right : node.left;
    search(near, q, k, heap);
    // visit the far side unless strictly outside the current worst distance;
    // equality must still be visited so index tie-breaks stay exact
    if (int(heap.size()) < k || delta * delta <= heap.front().dist) search(far, q, k, heap);
}

void KnnIndex::query(const Point& center, int k, std::vector<Neighbor>& out) const {
    if (k <= 0) fail_usage("knn_query: k must be >= 1");
    const double q[3] = {center.x, center.y, center.z};
    out.clear();
    out.reserve(size_t(k));
    search(root_, q, k, out);
    std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.index < b.index;
    });
    for (Neighbor& nb : out) nb.dist = std::sqrt(nb.dist);
    // pad short results by repeating the farthest neighbor
    while (!out.empty() && int(out.size()) < k) out.push_back(out.back());
}

std::vector<Neighbor> KnnIndex::query(const Point& center, int k) const {
    std::vector<Neighbor> out;
    query(center, k, out);
    return out;
}

}  // namespace railseg
