#pragma once

#include <cstdint>
#include <vector>

#include "pcq/features.hpp"
#include "pcq/multiscale.hpp"
#include "pcq/rbf.hpp"

namespace pcq {

inline constexpr std::size_t kGroupCount = 9;
inline constexpr std::size_t kDiffDims = kGroupCount * kCoeffCount;  // 306

/// Canonical group order: (High, Medium, Low) x (Curvature, Luma, Chroma).
inline std::size_t group_index(ScaleTag scale, FeatureKind feature) {
    return static_cast<std::size_t>(scale) * 3 + static_cast<std::size_t>(feature);
}

/// Per-group, per-coefficient mean relative coefficient differences between
/// an original/distorted tensor pair, flattened to 306 dimensions.
struct FeatureDiffVector {
    std::vector<double> values = std::vector<double>(kDiffDims, 0.0);

    double& at(ScaleTag scale, FeatureKind feature, std::size_t k) {
        return values[group_index(scale, feature) * kCoeffCount + k];
    }
    double at(ScaleTag scale, FeatureKind feature, std::size_t k) const {
        return values[group_index(scale, feature) * kCoeffCount + k];
    }
};

/// |wO - wD| / max(|wO|, |wD|); 0 when both magnitudes are below 1e-12.
double coeff_diff(double wO, double wD);

/// Mean of coeff_diff over reference points, per group and coefficient index.
/// Tensors must share the same reference set.
FeatureDiffVector aggregate_diffs(const CoefficientTensor& tO, const CoefficientTensor& tD);

/// sign(x) * ln(1 + |x|).
double log_modulus(double x);

/// Per-dimension mean and population standard deviation of Log-Modulus
/// transformed training rows. Stds are floored at 1e-8.
struct PreprocessStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    std::size_t dims() const { return mean.size(); }
};

PreprocessStats fit_zscore(const std::vector<FeatureDiffVector>& training);

/// (log_modulus(v) - mean) / std, elementwise.
std::vector<double> apply_preprocess(const FeatureDiffVector& v, const PreprocessStats& stats);

std::uint64_t preprocess_stats_hash(const PreprocessStats& stats);

}  // namespace pcq
