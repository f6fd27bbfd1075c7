#include "pcq/kdtree.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>

namespace pcq {

namespace {

constexpr std::size_t kLeafSize = 16;

struct Candidate {
    double d2;
    std::size_t index;

    bool operator<(const Candidate& o) const {
        if (d2 != o.d2) return d2 < o.d2;
        return index < o.index;
    }
};

}  // namespace

KdTree::KdTree(const std::vector<Vec3>& points) : points_(points) {
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
    if (!points_.empty()) {
        nodes_.reserve(2 * points_.size() / kLeafSize + 2);
        root_ = build(0, points_.size());
    }
}

std::uint32_t KdTree::build(std::size_t begin, std::size_t end) {
    const std::uint32_t id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    if (end - begin <= kLeafSize) {
        nodes_[id].axis = -1;
        nodes_[id].left = static_cast<std::uint32_t>(begin);
        nodes_[id].right = static_cast<std::uint32_t>(end);
        return id;
    }

    Vec3 lo = points_[order_[begin]];
    Vec3 hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
        const Vec3& p = points_[order_[i]];
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    }
    int axis = 0;
    double extent = hi[0] - lo[0];
    for (int a = 1; a < 3; ++a) {
        if (hi[a] - lo[a] > extent) {
            extent = hi[a] - lo[a];
            axis = a;
        }
    }

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::uint32_t a, std::uint32_t b) {
                         const double ca = points_[a][axis];
                         const double cb = points_[b][axis];
                         if (ca != cb) return ca < cb;
                         return a < b;
                     });

    nodes_[id].axis = axis;
    nodes_[id].split = points_[order_[mid]][axis];
    const std::uint32_t left = build(begin, mid);
    const std::uint32_t right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

std::vector<KdTree::Hit> KdTree::knn(const Vec3& query, std::size_t k) const {
    k = std::min(k, points_.size());
    std::vector<Hit> hits;
    if (k == 0) return hits;

    // Bounded max-heap keyed by (d², index); the front is the current worst.
    std::vector<Candidate> heap;
    heap.reserve(k + 1);
    auto heap_less = [](const Candidate& a, const Candidate& b) { return a < b; };

    auto offer = [&](std::size_t idx) {
        const Candidate c{squared_distance(query, points_[idx]), idx};
        if (heap.size() < k) {
            heap.push_back(c);
            std::push_heap(heap.begin(), heap.end(), heap_less);
        } else if (c < heap.front()) {
            std::pop_heap(heap.begin(), heap.end(), heap_less);
            heap.back() = c;
            std::push_heap(heap.begin(), heap.end(), heap_less);
        }
    };

    // Explicit stack; nodes are visited nearest-half first.
    std::vector<std::uint32_t> stack;
    stack.push_back(root_);
    while (!stack.empty()) {
        const Node& node = nodes_[stack.back()];
        stack.pop_back();
        if (node.axis < 0) {
            for (std::uint32_t i = node.left; i < node.right; ++i) offer(order_[i]);
            continue;
        }
        const double delta = query[node.axis] - node.split;
        const std::uint32_t near = delta < 0.0 ? node.left : node.right;
        const std::uint32_t far = delta < 0.0 ? node.right : node.left;
        // An equal-d² point with a smaller index can still displace the
        // current worst, so the far half is pruned only on strict excess.
        if (heap.size() < k || delta * delta <= heap.front().d2) stack.push_back(far);
        stack.push_back(near);
    }

    std::sort(heap.begin(), heap.end());
    hits.reserve(heap.size());
    for (const Candidate& c : heap) hits.push_back({c.index, std::sqrt(c.d2)});
    return hits;
}

KdTree::Hit KdTree::nearest(const Vec3& query) const {
    return knn(query, 1).at(0);
}

}  // namespace pcq
