#include "pcq/cloud.hpp"

#include <algorithm>

#include "pcq/error.hpp"

namespace pcq {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
        case ErrorCode::DegenerateCloud: return "DegenerateCloud";
        case ErrorCode::InsufficientDensity: return "InsufficientDensity";
        case ErrorCode::SingularPatch: return "SingularPatch";
        case ErrorCode::EmptyTensor: return "EmptyTensor";
        case ErrorCode::ReferenceMismatch: return "ReferenceMismatch";
        case ErrorCode::ShapeError: return "ShapeError";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::InsufficientBatch: return "InsufficientBatch";
        case ErrorCode::DegenerateTarget: return "DegenerateTarget";
        case ErrorCode::ModelStatsMismatch: return "ModelStatsMismatch";
        case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorCode::ChecksumError: return "ChecksumError";
    }
    return "Unknown";
}

NormalizationParams compute_norm_params(const RawPointCloud& cloud) {
    if (cloud.count() < 2) {
        throw Error(ErrorCode::DegenerateCloud,
                    "normalization needs at least 2 points, got " + std::to_string(cloud.count()));
    }
    Vec3 lo = cloud.positions.front();
    Vec3 hi = cloud.positions.front();
    for (const Vec3& p : cloud.positions) {
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    }
    const double l_max = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
    if (l_max <= 0.0) {
        throw Error(ErrorCode::DegenerateCloud, "all points coincide, bounding box is degenerate");
    }
    return NormalizationParams{lo, l_max};
}

NormalizedCloud normalize(const RawPointCloud& cloud, const NormalizationParams& params) {
    NormalizedCloud out;
    out.positions.reserve(cloud.count());
    const double scale = 1024.0 / params.l_max;
    for (const Vec3& p : cloud.positions) {
        out.positions.push_back((p - params.p_min) * scale);
    }
    out.colors = cloud.colors;
    out.has_color = cloud.has_color;
    return out;
}

}  // namespace pcq
