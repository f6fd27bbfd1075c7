#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pcq/vec3.hpp"

namespace pcq {

/// Exact k-nearest-neighbor index over a fixed set of 3D points.
/// Results are ordered by (distance, original index), so queries are
/// deterministic even when several points are equidistant.
class KdTree {
public:
    struct Hit {
        std::size_t index;
        double distance;
    };

    explicit KdTree(const std::vector<Vec3>& points);

    /// The k nearest points to `query`, ascending by (distance, index).
    /// k is clamped to the point count.
    std::vector<Hit> knn(const Vec3& query, std::size_t k) const;

    Hit nearest(const Vec3& query) const;

    std::size_t size() const { return points_.size(); }
    const Vec3& point(std::size_t i) const { return points_[i]; }

private:
    struct Node {
        double split = 0.0;
        int axis = -1;          // -1 marks a leaf
        std::uint32_t left = 0;   // child node ids, or [begin,end) into order_ for leaves
        std::uint32_t right = 0;
    };

    std::uint32_t build(std::size_t begin, std::size_t end);

    std::vector<Vec3> points_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
    std::uint32_t root_ = 0;
};

}  // namespace pcq
