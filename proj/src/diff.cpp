#include "pcq/diff.hpp"

#include <cmath>

#include "pcq/error.hpp"
#include "pcq/hash.hpp"

namespace pcq {

double coeff_diff(double wO, double wD) {
    const double denom = std::max(std::abs(wO), std::abs(wD));
    if (denom < 1e-12) return 0.0;
    return std::abs((wO - wD) / denom);
}

FeatureDiffVector aggregate_diffs(const CoefficientTensor& tO, const CoefficientTensor& tD) {
    if (tO.count() != tD.count()) {
        throw Error(ErrorCode::ReferenceMismatch, "tensor reference counts differ");
    }
    for (std::size_t t = 0; t < tO.count(); ++t) {
        if (!(tO.refs.points[t] == tD.refs.points[t])) {
            throw Error(ErrorCode::ReferenceMismatch, "tensor reference points differ");
        }
    }

    const std::size_t nr = tO.count();
    FeatureDiffVector out;
    for (std::size_t t = 0; t < nr; ++t) {
        for (ScaleTag scale : kScaleTags) {
            for (FeatureKind feature : kFeatureKinds) {
                const RbfCoefficients& co = tO.at(t, scale, feature);
                const RbfCoefficients& cd = tD.at(t, scale, feature);
                for (std::size_t k = 0; k < kPatchSize; ++k) {
                    out.at(scale, feature, k) += coeff_diff(co.omega[k], cd.omega[k]);
                }
                out.at(scale, feature, kPatchSize + 0) += coeff_diff(co.a, cd.a);
                out.at(scale, feature, kPatchSize + 1) += coeff_diff(co.b, cd.b);
                out.at(scale, feature, kPatchSize + 2) += coeff_diff(co.c, cd.c);
                out.at(scale, feature, kPatchSize + 3) += coeff_diff(co.d, cd.d);
            }
        }
    }
    for (double& v : out.values) v /= static_cast<double>(nr);
    return out;
}

double log_modulus(double x) {
    const double mag = std::log1p(std::abs(x));
    return x < 0.0 ? -mag : mag;
}

PreprocessStats fit_zscore(const std::vector<FeatureDiffVector>& training) {
    if (training.size() < 2) {
        throw Error(ErrorCode::InsufficientData, "z-score fit needs at least 2 rows");
    }
    const std::size_t dims = training.front().values.size();
    const double n = static_cast<double>(training.size());

    PreprocessStats stats;
    stats.mean.assign(dims, 0.0);
    stats.stddev.assign(dims, 0.0);

    for (const FeatureDiffVector& row : training) {
        if (row.values.size() != dims) {
            throw Error(ErrorCode::ShapeError, "training rows have mixed dimensionality");
        }
        for (std::size_t d = 0; d < dims; ++d) stats.mean[d] += log_modulus(row.values[d]);
    }
    for (double& m : stats.mean) m /= n;

    for (const FeatureDiffVector& row : training) {
        for (std::size_t d = 0; d < dims; ++d) {
            const double delta = log_modulus(row.values[d]) - stats.mean[d];
            stats.stddev[d] += delta * delta;
        }
    }
    for (double& s : stats.stddev) s = std::max(std::sqrt(s / n), 1e-8);
    return stats;
}

std::vector<double> apply_preprocess(const FeatureDiffVector& v, const PreprocessStats& stats) {
    if (v.values.size() != stats.dims()) {
        throw Error(ErrorCode::ShapeError,
                    "vector has " + std::to_string(v.values.size()) + " dims, stats expect " +
                        std::to_string(stats.dims()));
    }
    std::vector<double> out(v.values.size());
    for (std::size_t d = 0; d < out.size(); ++d) {
        out[d] = (log_modulus(v.values[d]) - stats.mean[d]) / stats.stddev[d];
    }
    return out;
}

std::uint64_t preprocess_stats_hash(const PreprocessStats& stats) {
    Fnv1a h;
    const std::uint64_t dims = stats.dims();
    h.update_value(dims);
    for (double m : stats.mean) h.update_value(m);
    for (double s : stats.stddev) h.update_value(s);
    return h.digest();
}

}  // namespace pcq
