#include "pcq/features.hpp"

#include <algorithm>

#include <Eigen/Dense>

#include "pcq/error.hpp"
#include "pcq/kdtree.hpp"
#include "pcq/threading.hpp"

namespace pcq {

const char* feature_name(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::Curvature: return "curvature";
        case FeatureKind::Luma: return "luma";
        case FeatureKind::Chroma: return "chroma";
    }
    return "?";
}

std::pair<double, double> rgb_to_luma_chroma(const Color& color) {
    const double y = 0.2126 * color.r + 0.7152 * color.g + 0.0722 * color.b;
    const double cr = (color.r - y) / 1.5748;
    return {y, cr};
}

std::vector<double> estimate_curvature(const NormalizedCloud& cloud, std::size_t k) {
    const std::size_t n = cloud.count();
    if (n <= k) {
        throw Error(ErrorCode::InsufficientDensity,
                    "curvature needs more than " + std::to_string(k) + " points, have " +
                        std::to_string(n));
    }

    const KdTree tree(cloud.positions);
    std::vector<double> curvature(n, 0.0);

    parallel_for(n, [&](std::size_t i) {
        const auto hits = tree.knn(cloud.positions[i], k + 1);
        const double m = static_cast<double>(hits.size());

        Vec3 mean{0.0, 0.0, 0.0};
        for (const auto& h : hits) mean += cloud.positions[h.index];
        mean = mean / m;

        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (const auto& h : hits) {
            const Vec3 d = cloud.positions[h.index] - mean;
            const Eigen::Vector3d v(d.x, d.y, d.z);
            cov += v * v.transpose();
        }
        cov /= m;

        const double total = cov.trace();
        if (total < 1e-12) return;

        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
        const double ratio = solver.eigenvalues().minCoeff() / total;
        curvature[i] = std::clamp(ratio, 0.0, 1.0 / 3.0);
    });
    return curvature;
}

FeatureField extract_features(const NormalizedCloud& cloud, std::size_t curvature_k) {
    FeatureField field;
    field.cloud = &cloud;
    field.curvature = estimate_curvature(cloud, curvature_k);
    field.luma.resize(cloud.count());
    field.chroma.resize(cloud.count());
    for (std::size_t i = 0; i < cloud.count(); ++i) {
        const auto [y, cr] = rgb_to_luma_chroma(cloud.colors[i]);
        field.luma[i] = y;
        field.chroma[i] = cr;
    }
    return field;
}

}  // namespace pcq
