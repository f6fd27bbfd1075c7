#pragma once

#include <array>
#include <cstddef>

#include "pcq/cloud.hpp"

namespace pcq {

enum class ScaleTag { High = 0, Medium = 1, Low = 2 };

inline constexpr std::array<ScaleTag, 3> kScaleTags = {ScaleTag::High, ScaleTag::Medium,
                                                       ScaleTag::Low};
inline constexpr std::array<double, 3> kDefaultVoxelSizes = {2.0, 4.0, 8.0};

const char* scale_name(ScaleTag tag);

struct ScaleSet {
    std::array<NormalizedCloud, 3> clouds;

    NormalizedCloud& operator[](ScaleTag tag) { return clouds[static_cast<std::size_t>(tag)]; }
    const NormalizedCloud& operator[](ScaleTag tag) const {
        return clouds[static_cast<std::size_t>(tag)];
    }
};

/// Collapse points into voxels of the given edge length. One output point per
/// occupied voxel: centroid position, per-channel mean color rounded to the
/// nearest integer. Output is ordered by voxel index (z, then y, then x) and
/// is invariant to input permutation.
NormalizedCloud voxel_downsample(const NormalizedCloud& cloud, double voxel_size);

/// The three analysis scales, finest to coarsest. Throws InsufficientDensity
/// when any scale has fewer than 30 points.
ScaleSet build_scale_set(const NormalizedCloud& cloud,
                         const std::array<double, 3>& voxel_sizes = kDefaultVoxelSizes);

}  // namespace pcq
