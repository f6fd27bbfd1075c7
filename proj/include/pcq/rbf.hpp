#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pcq/cloud.hpp"
#include "pcq/features.hpp"
#include "pcq/kdtree.hpp"
#include "pcq/multiscale.hpp"
#include "pcq/vec3.hpp"

namespace pcq {

inline constexpr std::size_t kPatchSize = 30;
inline constexpr std::size_t kCoeffCount = kPatchSize + 4;

enum class CloudRole { Original, Distorted };

struct ReferenceSet {
    std::vector<Vec3> points;
    std::size_t count() const { return points.size(); }
};

struct ReferenceConfig {
    double voxel = 16.0;
    std::size_t max_count = 4096;
    std::uint64_t seed = 0;
};

/// Coarse voxel downsample of the original cloud, capped to max_count by a
/// seeded uniform subset. Always derived from the original of a pair.
ReferenceSet select_reference_points(const NormalizedCloud& original,
                                     const ReferenceConfig& config);

/// Deduplicated, query-ready view of one scale cloud. Exact duplicate
/// positions are collapsed (first occurrence wins, its features kept) so
/// patches never contain repeated nodes.
struct PatchIndex {
    PatchIndex(const NormalizedCloud& cloud, const FeatureField& features);

    std::vector<Vec3> positions;
    std::array<std::vector<double>, 3> features;
    KdTree tree;
};

struct NeighborPatch {
    Vec3 ref;
    ScaleTag scale = ScaleTag::High;
    CloudRole role = CloudRole::Original;
    std::vector<Vec3> positions;                  // ascending by distance to ref
    std::array<std::vector<double>, 3> features;  // indexed by FeatureKind

    std::size_t size() const { return positions.size(); }
};

/// The n nearest distinct cloud positions to ref, sorted ascending by
/// distance with index tie-break, carrying all three feature channels.
NeighborPatch knn_patch(const PatchIndex& index, const Vec3& ref, std::size_t n = kPatchSize);
NeighborPatch knn_patch(const NormalizedCloud& cloud, const FeatureField& features,
                        const Vec3& ref, std::size_t n = kPatchSize);

/// Biharmonic kernel, phi(r) = r.
inline double rbf_kernel(double r) { return r; }

struct RbfCoefficients {
    std::vector<double> omega;  // one weight per patch node
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
};

struct RbfSystem {
    Eigen::MatrixXd X;  // (n+4) x (n+4), symmetric
    Eigen::VectorXd Y;  // n feature values then 4 zeros
};

/// Interpolation system for one patch: kernel block, affine tail columns
/// (x, y, z, 1), mirrored constraint rows, zero corner block.
RbfSystem assemble_system(const NeighborPatch& patch, FeatureKind feature);

/// Solves (X + lambda I') W = Y by partially pivoted LU, with Tikhonov
/// lambda = 1e-9 times the mean kernel-block row norm applied to the kernel
/// diagonal only. Throws SingularPatch when the solve degenerates.
RbfCoefficients solve_rbf(const NeighborPatch& patch, FeatureKind feature);

/// a*x + b*y + c*z + d + sum_n omega_n * phi(|query - p_n|).
double evaluate_rbf(const RbfCoefficients& coeffs, const NeighborPatch& patch, const Vec3& query);

struct CoefficientTensor {
    ReferenceSet refs;
    std::vector<RbfCoefficients> records;  // dense, ((t*3 + scale)*3 + feature)

    std::size_t count() const { return refs.count(); }
    const RbfCoefficients& at(std::size_t t, ScaleTag scale, FeatureKind feature) const {
        return records[(t * 3 + static_cast<std::size_t>(scale)) * 3 +
                       static_cast<std::size_t>(feature)];
    }
};

struct TensorFit {
    CoefficientTensor tensor;           // dense over the surviving reference points
    std::vector<std::size_t> kept;      // input ref indices that survived, ascending
    std::vector<std::size_t> dropped;   // input ref indices with a singular patch
};

/// Fits all (reference point, scale, feature) coefficient records. Reference
/// points whose patch is singular at any scale/feature are dropped; throws
/// EmptyTensor when none survive.
TensorFit fit_coefficient_tensor(const ScaleSet& scales,
                                 const std::array<FeatureField, 3>& fields,
                                 const ReferenceSet& refs);

/// Restricts two fits over the same input ReferenceSet to the reference
/// points that survived in both.
std::pair<CoefficientTensor, CoefficientTensor> align_tensors(const TensorFit& original,
                                                              const TensorFit& distorted);

}  // namespace pcq
