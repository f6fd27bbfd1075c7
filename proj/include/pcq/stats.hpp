#pragma once

#include <cstdint>
#include <vector>

#include "pcq/cloud.hpp"
#include "pcq/features.hpp"

namespace pcq {

/// Pearson correlation. Returns 0 (with a stderr warning) when either input
/// has variance below 1e-12.
double plcc(const std::vector<double>& x, const std::vector<double>& y,
            bool* degenerate = nullptr);

/// Spearman: Pearson over average-ranked values.
double srocc(const std::vector<double>& x, const std::vector<double>& y,
             bool* degenerate = nullptr);

/// Kendall tau-b, tie-corrected in both arguments.
double krocc(const std::vector<double>& x, const std::vector<double>& y,
             bool* degenerate = nullptr);

double rmse(const std::vector<double>& x, const std::vector<double>& y);

struct LogisticParams {
    double b1 = 0.0;  // upper asymptote level
    double b2 = 0.0;  // lower asymptote level
    double b3 = 0.0;  // inflection point
    double b4 = 1.0;  // slope scale, |b4| > 0
    bool converged = true;

    double operator()(double s) const;
};

/// VQEG-style monotone 4-parameter logistic, fitted with Levenberg-Marquardt
/// (damping 1e-3, at most 200 iterations). Never fits worse than its
/// initialization; sets converged=false when the tolerance was not reached.
LogisticParams fit_logistic(const std::vector<double>& pred, const std::vector<double>& mos);

struct EvalReport {
    double plcc = 0.0;
    double srocc = 0.0;
    double krocc = 0.0;
    double rmse = 0.0;
    std::size_t n = 0;
    LogisticParams logistic;
};

/// Rank metrics on raw scores; PLCC/RMSE after the fitted logistic mapping.
EvalReport evaluate(const std::vector<double>& pred, const std::vector<double>& mos);

struct SplitPlan {
    struct Round {
        std::vector<std::size_t> train, test;
    };
    std::vector<Round> rounds;
};

/// Independent seeded shuffles; per round |train| = round(ratio * n).
SplitPlan shuffle_split(std::size_t n, double ratio = 0.6, std::size_t rounds = 5,
                        std::uint64_t seed = 0);

/// (s - lo) / (hi - lo), clamped to [0, 1].
std::vector<double> normalize_mos(const std::vector<double>& scores, double lo, double hi);

enum class P2pChannel { Geometry, Curvature, Luma, Chroma };

/// Symmetric point-to-point baseline: max over both directions of the mean
/// nearest-neighbor error (coordinate L2 for Geometry, |delta| otherwise).
double classic_p2p(const NormalizedCloud& original, const FeatureField& original_features,
                   const NormalizedCloud& distorted, const FeatureField& distorted_features,
                   P2pChannel channel);

}  // namespace pcq
