#include "pcq/rbf.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "pcq/error.hpp"
#include "pcq/hash.hpp"
#include "pcq/rng.hpp"
#include "pcq/threading.hpp"

namespace pcq {

namespace {

struct Vec3Hash {
    std::size_t operator()(const Vec3& v) const {
        Fnv1a h;
        h.update_value(v.x);
        h.update_value(v.y);
        h.update_value(v.z);
        return static_cast<std::size_t>(h.digest());
    }
};

struct Vec3Eq {
    bool operator()(const Vec3& a, const Vec3& b) const {
        return a.x == b.x && a.y == b.y && a.z == b.z;
    }
};

const std::vector<Vec3>& collapse_duplicates(const NormalizedCloud& cloud,
                                             const FeatureField& field,
                                             std::vector<Vec3>& positions,
                                             std::array<std::vector<double>, 3>& features) {
    std::unordered_set<Vec3, Vec3Hash, Vec3Eq> seen;
    seen.reserve(cloud.count());
    for (std::size_t i = 0; i < cloud.count(); ++i) {
        if (seen.insert(cloud.positions[i]).second) {
            positions.push_back(cloud.positions[i]);
            for (std::size_t f = 0; f < 3; ++f) {
                features[f].push_back(field.channel(kFeatureKinds[f])[i]);
            }
        }
    }
    return positions;
}

double tikhonov_lambda(const Eigen::MatrixXd& x, std::size_t n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum += x.row(static_cast<Eigen::Index>(i)).head(static_cast<Eigen::Index>(n)).norm();
    }
    return 1e-9 * sum / static_cast<double>(n);
}

/// Constraint residual bound from the coefficient-type invariant.
double constraint_tolerance(const NeighborPatch& patch, const RbfCoefficients& coeffs) {
    double max_omega = 0.0;
    for (double w : coeffs.omega) max_omega = std::max(max_omega, std::abs(w));
    double max_coord = 0.0;
    for (const Vec3& p : patch.positions) {
        max_coord = std::max({max_coord, std::abs(p.x), std::abs(p.y), std::abs(p.z)});
    }
    return 1e-8 * std::max(1.0, max_omega * max_coord);
}

bool coefficients_valid(const NeighborPatch& patch, const RbfCoefficients& coeffs) {
    double s0 = 0.0, sx = 0.0, sy = 0.0, sz = 0.0;
    for (std::size_t i = 0; i < coeffs.omega.size(); ++i) {
        const double w = coeffs.omega[i];
        if (!std::isfinite(w)) return false;
        s0 += w;
        sx += w * patch.positions[i].x;
        sy += w * patch.positions[i].y;
        sz += w * patch.positions[i].z;
    }
    if (!std::isfinite(coeffs.a) || !std::isfinite(coeffs.b) || !std::isfinite(coeffs.c) ||
        !std::isfinite(coeffs.d)) {
        return false;
    }
    const double tol = constraint_tolerance(patch, coeffs);
    return std::abs(s0) <= tol && std::abs(sx) <= tol && std::abs(sy) <= tol &&
           std::abs(sz) <= tol;
}

RbfCoefficients split_solution(const Eigen::VectorXd& w, std::size_t n) {
    RbfCoefficients coeffs;
    coeffs.omega.assign(w.data(), w.data() + n);
    coeffs.a = w(static_cast<Eigen::Index>(n));
    coeffs.b = w(static_cast<Eigen::Index>(n) + 1);
    coeffs.c = w(static_cast<Eigen::Index>(n) + 2);
    coeffs.d = w(static_cast<Eigen::Index>(n) + 3);
    return coeffs;
}

}  // namespace

ReferenceSet select_reference_points(const NormalizedCloud& original,
                                     const ReferenceConfig& config) {
    const NormalizedCloud coarse = voxel_downsample(original, config.voxel);
    ReferenceSet refs;
    if (coarse.count() <= config.max_count) {
        refs.points = coarse.positions;
        return refs;
    }

    std::vector<std::size_t> order(coarse.count());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(config.seed, "reference-cap"));
    rng.shuffle(order);
    order.resize(config.max_count);
    std::sort(order.begin(), order.end());

    refs.points.reserve(config.max_count);
    for (std::size_t i : order) refs.points.push_back(coarse.positions[i]);
    return refs;
}

PatchIndex::PatchIndex(const NormalizedCloud& cloud, const FeatureField& field)
    : tree(collapse_duplicates(cloud, field, positions, features)) {}

NeighborPatch knn_patch(const PatchIndex& index, const Vec3& ref, std::size_t n) {
    if (index.positions.size() < n) {
        throw Error(ErrorCode::InsufficientDensity,
                    "patch query needs " + std::to_string(n) + " distinct positions, have " +
                        std::to_string(index.positions.size()));
    }
    const auto hits = index.tree.knn(ref, n);

    NeighborPatch patch;
    patch.ref = ref;
    patch.positions.reserve(n);
    for (std::size_t f = 0; f < 3; ++f) patch.features[f].reserve(n);
    for (const auto& h : hits) {
        patch.positions.push_back(index.positions[h.index]);
        for (std::size_t f = 0; f < 3; ++f) {
            patch.features[f].push_back(index.features[f][h.index]);
        }
    }
    return patch;
}

NeighborPatch knn_patch(const NormalizedCloud& cloud, const FeatureField& features,
                        const Vec3& ref, std::size_t n) {
    return knn_patch(PatchIndex(cloud, features), ref, n);
}

RbfSystem assemble_system(const NeighborPatch& patch, FeatureKind feature) {
    const std::size_t n = patch.size();
    const Eigen::Index ni = static_cast<Eigen::Index>(n);

    RbfSystem sys;
    sys.X = Eigen::MatrixXd::Zero(ni + 4, ni + 4);
    sys.Y = Eigen::VectorXd::Zero(ni + 4);

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            sys.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rbf_kernel(distance(patch.positions[i], patch.positions[j]));
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Index ii = static_cast<Eigen::Index>(i);
        const Vec3& p = patch.positions[i];
        sys.X(ii, ni + 0) = p.x;
        sys.X(ii, ni + 1) = p.y;
        sys.X(ii, ni + 2) = p.z;
        sys.X(ii, ni + 3) = 1.0;
        sys.X(ni + 0, ii) = p.x;
        sys.X(ni + 1, ii) = p.y;
        sys.X(ni + 2, ii) = p.z;
        sys.X(ni + 3, ii) = 1.0;
    }

    const auto& values = patch.features[static_cast<std::size_t>(feature)];
    for (std::size_t i = 0; i < n; ++i) sys.Y(static_cast<Eigen::Index>(i)) = values[i];
    return sys;
}

RbfCoefficients solve_rbf(const NeighborPatch& patch, FeatureKind feature) {
    RbfSystem sys = assemble_system(patch, feature);
    const std::size_t n = patch.size();

    const double lambda = tikhonov_lambda(sys.X, n);
    for (std::size_t i = 0; i < n; ++i) {
        sys.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += lambda;
    }

    const Eigen::VectorXd w = Eigen::PartialPivLU<Eigen::MatrixXd>(sys.X).solve(sys.Y);
    RbfCoefficients coeffs = split_solution(w, n);
    if (!coefficients_valid(patch, coeffs)) {
        throw Error(ErrorCode::SingularPatch, "degenerate patch geometry");
    }
    return coeffs;
}

double evaluate_rbf(const RbfCoefficients& coeffs, const NeighborPatch& patch,
                    const Vec3& query) {
    double value = coeffs.a * query.x + coeffs.b * query.y + coeffs.c * query.z + coeffs.d;
    for (std::size_t i = 0; i < coeffs.omega.size(); ++i) {
        value += coeffs.omega[i] * rbf_kernel(distance(query, patch.positions[i]));
    }
    return value;
}

TensorFit fit_coefficient_tensor(const ScaleSet& scales,
                                 const std::array<FeatureField, 3>& fields,
                                 const ReferenceSet& refs) {
    const std::size_t nr = refs.count();
    std::array<PatchIndex, 3> indices = {
        PatchIndex(scales[ScaleTag::High], fields[0]),
        PatchIndex(scales[ScaleTag::Medium], fields[1]),
        PatchIndex(scales[ScaleTag::Low], fields[2]),
    };
    for (const PatchIndex& index : indices) {
        if (index.positions.size() < kPatchSize) {
            throw Error(ErrorCode::InsufficientDensity,
                        "scale cloud has fewer than 30 distinct positions");
        }
    }

    std::vector<RbfCoefficients> all(nr * 9);
    std::vector<char> ok(nr, 1);

    parallel_for(nr, [&](std::size_t t) {
        for (std::size_t s = 0; s < 3 && ok[t]; ++s) {
            NeighborPatch patch = knn_patch(indices[s], refs.points[t]);
            patch.scale = kScaleTags[s];
            RbfSystem sys = assemble_system(patch, FeatureKind::Curvature);
            const double lambda = tikhonov_lambda(sys.X, patch.size());
            for (std::size_t i = 0; i < patch.size(); ++i) {
                sys.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += lambda;
            }
            const Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys.X);

            for (std::size_t f = 0; f < 3; ++f) {
                Eigen::VectorXd y = Eigen::VectorXd::Zero(sys.Y.size());
                const auto& values = patch.features[f];
                for (std::size_t i = 0; i < patch.size(); ++i) {
                    y(static_cast<Eigen::Index>(i)) = values[i];
                }
                RbfCoefficients coeffs = split_solution(lu.solve(y), patch.size());
                if (!coefficients_valid(patch, coeffs)) {
                    ok[t] = 0;
                    break;
                }
                all[(t * 3 + s) * 3 + f] = std::move(coeffs);
            }
        }
    });

    TensorFit fit;
    for (std::size_t t = 0; t < nr; ++t) {
        if (ok[t]) {
            fit.kept.push_back(t);
        } else {
            fit.dropped.push_back(t);
        }
    }
    if (fit.kept.empty()) {
        throw Error(ErrorCode::EmptyTensor, "every reference point produced a singular patch");
    }

    fit.tensor.refs.points.reserve(fit.kept.size());
    fit.tensor.records.reserve(fit.kept.size() * 9);
    for (std::size_t t : fit.kept) {
        fit.tensor.refs.points.push_back(refs.points[t]);
        for (std::size_t g = 0; g < 9; ++g) {
            fit.tensor.records.push_back(std::move(all[t * 9 + g]));
        }
    }
    return fit;
}

std::pair<CoefficientTensor, CoefficientTensor> align_tensors(const TensorFit& original,
                                                              const TensorFit& distorted) {
    std::vector<std::size_t> common;
    std::set_intersection(original.kept.begin(), original.kept.end(), distorted.kept.begin(),
                          distorted.kept.end(), std::back_inserter(common));
    if (common.empty()) {
        throw Error(ErrorCode::EmptyTensor, "no reference point survived in both clouds");
    }

    auto subset = [&](const TensorFit& fit) {
        CoefficientTensor out;
        out.refs.points.reserve(common.size());
        out.records.reserve(common.size() * 9);
        std::size_t row = 0;
        for (std::size_t t : common) {
            while (fit.kept[row] != t) ++row;
            out.refs.points.push_back(fit.tensor.refs.points[row]);
            for (std::size_t g = 0; g < 9; ++g) {
                out.records.push_back(fit.tensor.records[row * 9 + g]);
            }
        }
        return out;
    };
    return {subset(original), subset(distorted)};
}

}  // namespace pcq
