#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pcq/cloud.hpp"

namespace pcq {

enum class DistortionKind { GaussianGeometry, Dropout, ColorQuantize };

const char* distortion_name(DistortionKind kind);

struct DistortionSpec {
    DistortionKind kind = DistortionKind::GaussianGeometry;
    double level = 0.0;  // sigma | drop fraction in [0,1) | bits retained 1-8
    std::uint64_t seed = 0;
};

/// Seeded synthetic distortions. Identity levels (sigma 0, drop 0, bits 8)
/// return a bit-identical copy.
NormalizedCloud apply_distortion(const NormalizedCloud& cloud, const DistortionSpec& spec);

/// One distorted cloud per level; level i uses seed + i.
std::vector<std::pair<double, NormalizedCloud>> distortion_ladder(
    const NormalizedCloud& cloud, DistortionKind kind, const std::vector<double>& levels,
    std::uint64_t seed);

}  // namespace pcq
