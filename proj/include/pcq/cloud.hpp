#pragma once

#include <cstdint>
#include <vector>

#include "pcq/vec3.hpp"

namespace pcq {

struct Color {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    bool operator==(const Color& o) const = default;
};

/// Point cloud as parsed from file: positions in source units plus 8-bit RGB.
/// Colorless files are filled with mid-gray and flagged.
struct RawPointCloud {
    std::vector<Vec3> positions;
    std::vector<Color> colors;
    bool has_color = true;

    std::size_t count() const { return positions.size(); }
};

/// Scale/offset that maps a cloud into the [0, 1024] working frame.
/// Always computed from the original cloud of a pair and shared with the
/// distorted cloud so both land in the same frame.
struct NormalizationParams {
    Vec3 p_min;
    double l_max = 0.0;
};

/// Cloud in the normalized frame. Produced from the original, the longest
/// bounding-box axis spans exactly [0, 1024]; a distorted cloud normalized
/// with the original's params may exceed that slightly (no clamping).
struct NormalizedCloud {
    std::vector<Vec3> positions;
    std::vector<Color> colors;
    bool has_color = true;

    std::size_t count() const { return positions.size(); }
};

/// Bounding-box minimum and maximum edge length of the cloud.
/// Throws DegenerateCloud when all points coincide (l_max would be 0).
NormalizationParams compute_norm_params(const RawPointCloud& cloud);

/// p -> 1024 * (p - p_min) / l_max, colors passed through.
NormalizedCloud normalize(const RawPointCloud& cloud, const NormalizationParams& params);

}  // namespace pcq
