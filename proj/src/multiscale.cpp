#include "pcq/multiscale.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <tuple>
#include <vector>

#include "pcq/error.hpp"

namespace pcq {

const char* scale_name(ScaleTag tag) {
    switch (tag) {
        case ScaleTag::High: return "high";
        case ScaleTag::Medium: return "medium";
        case ScaleTag::Low: return "low";
    }
    return "?";
}

namespace {

struct VoxelKey {
    std::int64_t z, y, x;
    auto operator<=>(const VoxelKey&) const = default;
};

}  // namespace

NormalizedCloud voxel_downsample(const NormalizedCloud& cloud, double voxel_size) {
    if (!(voxel_size > 0.0)) {
        throw Error(ErrorCode::ConfigError, "voxel size must be positive");
    }

    const std::size_t n = cloud.count();
    std::vector<std::pair<VoxelKey, std::uint32_t>> cells(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3& p = cloud.positions[i];
        cells[i] = {{static_cast<std::int64_t>(std::floor(p.z / voxel_size)),
                     static_cast<std::int64_t>(std::floor(p.y / voxel_size)),
                     static_cast<std::int64_t>(std::floor(p.x / voxel_size))},
                    static_cast<std::uint32_t>(i)};
    }

    // Members are summed in content order (position, then color) so the
    // result is bit-identical under any permutation of the input.
    std::sort(cells.begin(), cells.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        const Vec3& pa = cloud.positions[a.second];
        const Vec3& pb = cloud.positions[b.second];
        if (auto c = std::tie(pa.x, pa.y, pa.z) <=> std::tie(pb.x, pb.y, pb.z); c != 0) {
            return c < 0;
        }
        const Color& ca = cloud.colors[a.second];
        const Color& cb = cloud.colors[b.second];
        return std::tie(ca.r, ca.g, ca.b) < std::tie(cb.r, cb.g, cb.b);
    });

    NormalizedCloud out;
    out.has_color = cloud.has_color;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        Vec3 pos_sum{0.0, 0.0, 0.0};
        double r = 0.0, g = 0.0, b = 0.0;
        while (j < n && cells[j].first == cells[i].first) {
            const std::uint32_t idx = cells[j].second;
            pos_sum += cloud.positions[idx];
            r += cloud.colors[idx].r;
            g += cloud.colors[idx].g;
            b += cloud.colors[idx].b;
            ++j;
        }
        const double m = static_cast<double>(j - i);
        out.positions.push_back(pos_sum / m);
        out.colors.push_back({static_cast<std::uint8_t>(std::lround(r / m)),
                              static_cast<std::uint8_t>(std::lround(g / m)),
                              static_cast<std::uint8_t>(std::lround(b / m))});
        i = j;
    }
    return out;
}

ScaleSet build_scale_set(const NormalizedCloud& cloud, const std::array<double, 3>& voxel_sizes) {
    ScaleSet set;
    for (ScaleTag tag : kScaleTags) {
        const std::size_t s = static_cast<std::size_t>(tag);
        set[tag] = voxel_downsample(cloud, voxel_sizes[s]);
        if (set[tag].count() < 30) {
            throw Error(ErrorCode::InsufficientDensity,
                        std::string("scale ") + scale_name(tag) + " has " +
                            std::to_string(set[tag].count()) + " points, need at least 30");
        }
    }
    return set;
}

}  // namespace pcq
