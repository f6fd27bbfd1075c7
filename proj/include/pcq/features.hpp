#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "pcq/cloud.hpp"

namespace pcq {

enum class FeatureKind { Curvature = 0, Luma = 1, Chroma = 2 };

inline constexpr std::array<FeatureKind, 3> kFeatureKinds = {
    FeatureKind::Curvature, FeatureKind::Luma, FeatureKind::Chroma};

const char* feature_name(FeatureKind kind);

/// Per-point feature channels for one cloud. Curvature lies in [0, 1/3],
/// luma in [0, 255], chroma in [-127.5, 127.5].
struct FeatureField {
    const NormalizedCloud* cloud = nullptr;
    std::vector<double> curvature;
    std::vector<double> luma;
    std::vector<double> chroma;

    const std::vector<double>& channel(FeatureKind kind) const {
        switch (kind) {
            case FeatureKind::Curvature: return curvature;
            case FeatureKind::Luma: return luma;
            case FeatureKind::Chroma: return chroma;
        }
        return curvature;
    }
};

/// Full-range BT.709: Y = 0.2126 R + 0.7152 G + 0.0722 B, Cr = (R - Y) / 1.5748.
/// No +128 chroma offset, so gray maps to zero chroma.
std::pair<double, double> rgb_to_luma_chroma(const Color& color);

/// Surface variation lambda_min / (lambda_0 + lambda_1 + lambda_2) from the
/// covariance of each point together with its k nearest neighbors. Zero when
/// the total variance is below 1e-12.
std::vector<double> estimate_curvature(const NormalizedCloud& cloud, std::size_t k = 30);

FeatureField extract_features(const NormalizedCloud& cloud, std::size_t curvature_k = 30);

}  // namespace pcq
