#include "pcq/stats.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include <Eigen/Dense>

#include "pcq/error.hpp"
#include "pcq/kdtree.hpp"
#include "pcq/rng.hpp"

namespace pcq {

namespace {

void check_pair(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) {
        throw Error(ErrorCode::ShapeError, "paired statistics need equal-length vectors");
    }
    if (x.size() < 2) {
        throw Error(ErrorCode::ShapeError, "paired statistics need at least 2 samples");
    }
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

bool flag_degenerate(bool* out) {
    if (out) *out = true;
    std::cerr << "warning: degenerate variance, correlation reported as 0\n";
    return true;
}

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> rankify(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (v[a] != v[b]) return v[a] < v[b];
        return a < b;
    });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double plcc(const std::vector<double>& x, const std::vector<double>& y, bool* degenerate) {
    check_pair(x, y);
    if (degenerate) *degenerate = false;

    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    const double n = static_cast<double>(x.size());
    if (sxx / n < 1e-12 || syy / n < 1e-12) {
        flag_degenerate(degenerate);
        return 0.0;
    }
    return sxy / std::sqrt(sxx * syy);
}

double srocc(const std::vector<double>& x, const std::vector<double>& y, bool* degenerate) {
    check_pair(x, y);
    return plcc(rankify(x), rankify(y), degenerate);
}

double krocc(const std::vector<double>& x, const std::vector<double>& y, bool* degenerate) {
    check_pair(x, y);
    if (degenerate) *degenerate = false;

    const std::size_t n = x.size();
    long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = x[i] - x[j];
            const double dy = y[i] - y[j];
            if (dx == 0.0 && dy == 0.0) {
                ++ties_x;
                ++ties_y;
            } else if (dx == 0.0) {
                ++ties_x;
            } else if (dy == 0.0) {
                ++ties_y;
            } else if ((dx > 0.0) == (dy > 0.0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const long long n0 = static_cast<long long>(n) * static_cast<long long>(n - 1) / 2;
    const double denom = std::sqrt(static_cast<double>(n0 - ties_x)) *
                         std::sqrt(static_cast<double>(n0 - ties_y));
    if (denom == 0.0) {
        flag_degenerate(degenerate);
        return 0.0;
    }
    return static_cast<double>(concordant - discordant) / denom;
}

double rmse(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) {
        throw Error(ErrorCode::ShapeError, "rmse needs equal-length vectors");
    }
    if (x.empty()) {
        throw Error(ErrorCode::ShapeError, "rmse needs at least 1 sample");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(x.size()));
}

double LogisticParams::operator()(double s) const {
    return b2 + (b1 - b2) / (1.0 + std::exp(-(s - b3) / std::abs(b4)));
}

namespace {

double residual_sum(const LogisticParams& p, const std::vector<double>& pred,
                    const std::vector<double>& mos) {
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = p(pred[i]) - mos[i];
        sum += r * r;
    }
    return sum;
}

}  // namespace

LogisticParams fit_logistic(const std::vector<double>& pred, const std::vector<double>& mos) {
    if (pred.size() != mos.size()) {
        throw Error(ErrorCode::ShapeError, "logistic fit needs paired vectors");
    }
    if (pred.size() < 5) {
        throw Error(ErrorCode::InsufficientData, "logistic fit needs at least 5 samples");
    }
    const auto [mos_min, mos_max] = std::minmax_element(mos.begin(), mos.end());
    if (*mos_min == *mos_max) {
        throw Error(ErrorCode::DegenerateTarget, "target scores are all equal");
    }

    const std::size_t n = pred.size();
    LogisticParams p;
    p.b1 = *mos_max;
    p.b2 = *mos_min;
    {
        std::vector<double> sorted = pred;
        std::sort(sorted.begin(), sorted.end());
        p.b3 = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    }
    {
        const double m = mean_of(pred);
        double var = 0.0;
        for (double s : pred) var += (s - m) * (s - m);
        const double sd = std::sqrt(var / static_cast<double>(n));
        p.b4 = sd > 0.0 ? sd / 4.0 : 1.0;
    }

    double damping = 1e-3;
    double best_residual = residual_sum(p, pred, mos);
    LogisticParams best = p;
    bool converged = false;

    Eigen::MatrixXd jac(static_cast<Eigen::Index>(n), 4);
    Eigen::VectorXd res(static_cast<Eigen::Index>(n));

    for (int iter = 0; iter < 200 && !converged; ++iter) {
        const double abs_b4 = std::abs(p.b4);
        for (std::size_t i = 0; i < n; ++i) {
            const double u = (pred[i] - p.b3) / abs_b4;
            const double sig = 1.0 / (1.0 + std::exp(-u));
            const double dsig = sig * (1.0 - sig);
            const double span = p.b1 - p.b2;
            const Eigen::Index ii = static_cast<Eigen::Index>(i);
            jac(ii, 0) = sig;
            jac(ii, 1) = 1.0 - sig;
            jac(ii, 2) = -span * dsig / abs_b4;
            jac(ii, 3) = -span * dsig * u * (p.b4 >= 0.0 ? 1.0 : -1.0) / abs_b4;
            res(ii) = p.b2 + span * sig - mos[i];
        }

        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * res;

        bool stepped = false;
        for (int attempt = 0; attempt < 20; ++attempt) {
            Eigen::MatrixXd damped = jtj;
            for (int d = 0; d < 4; ++d) damped(d, d) += damping * std::max(jtj(d, d), 1e-12);
            const Eigen::VectorXd delta = damped.ldlt().solve(-jtr);

            LogisticParams trial = p;
            trial.b1 += delta(0);
            trial.b2 += delta(1);
            trial.b3 += delta(2);
            trial.b4 += delta(3);
            if (std::abs(trial.b4) < 1e-12 || !std::isfinite(trial.b4)) {
                damping *= 10.0;
                continue;
            }
            const double trial_residual = residual_sum(trial, pred, mos);
            if (std::isfinite(trial_residual) && trial_residual <= best_residual) {
                const double change = best_residual - trial_residual;
                if (change < 1e-10 * std::max(best_residual, 1e-30)) converged = true;
                p = trial;
                best = trial;
                best_residual = trial_residual;
                damping = std::max(damping * 0.1, 1e-12);
                stepped = true;
                break;
            }
            damping *= 10.0;
        }
        if (!stepped) {
            converged = true;  // damping exhausted: at a local minimum
        }
    }

    best.converged = converged;
    return best;
}

EvalReport evaluate(const std::vector<double>& pred, const std::vector<double>& mos) {
    if (pred.size() < 5) {
        throw Error(ErrorCode::InsufficientData, "evaluation needs at least 5 samples");
    }
    EvalReport report;
    report.n = pred.size();
    report.srocc = srocc(pred, mos);
    report.krocc = krocc(pred, mos);
    report.logistic = fit_logistic(pred, mos);

    std::vector<double> mapped(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) mapped[i] = report.logistic(pred[i]);
    report.plcc = plcc(mapped, mos);
    report.rmse = rmse(mapped, mos);
    return report;
}

SplitPlan shuffle_split(std::size_t n, double ratio, std::size_t rounds, std::uint64_t seed) {
    if (n < 5) {
        throw Error(ErrorCode::InsufficientData, "shuffle split needs at least 5 samples");
    }
    const std::size_t train_count =
        static_cast<std::size_t>(std::lround(ratio * static_cast<double>(n)));

    SplitPlan plan;
    plan.rounds.resize(rounds);
    for (std::size_t r = 0; r < rounds; ++r) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(seed, "split", r));
        rng.shuffle(order);

        SplitPlan::Round& round = plan.rounds[r];
        round.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_count));
        round.test.assign(order.begin() + static_cast<std::ptrdiff_t>(train_count), order.end());
        std::sort(round.train.begin(), round.train.end());
        std::sort(round.test.begin(), round.test.end());
    }
    return plan;
}

std::vector<double> normalize_mos(const std::vector<double>& scores, double lo, double hi) {
    if (!(hi > lo)) {
        throw Error(ErrorCode::ConfigError, "mos range needs hi > lo");
    }
    std::vector<double> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::clamp((scores[i] - lo) / (hi - lo), 0.0, 1.0);
    }
    return out;
}

namespace {

double directed_p2p(const NormalizedCloud& from, const FeatureField& from_features,
                    const NormalizedCloud& to, const FeatureField& to_features,
                    const KdTree& to_tree, P2pChannel channel) {
    double sum = 0.0;
    for (std::size_t i = 0; i < from.count(); ++i) {
        const KdTree::Hit hit = to_tree.nearest(from.positions[i]);
        if (channel == P2pChannel::Geometry) {
            sum += hit.distance;
        } else {
            const FeatureKind kind = channel == P2pChannel::Curvature ? FeatureKind::Curvature
                                     : channel == P2pChannel::Luma    ? FeatureKind::Luma
                                                                      : FeatureKind::Chroma;
            sum += std::abs(from_features.channel(kind)[i] - to_features.channel(kind)[hit.index]);
        }
    }
    return sum / static_cast<double>(from.count());
}

}  // namespace

double classic_p2p(const NormalizedCloud& original, const FeatureField& original_features,
                   const NormalizedCloud& distorted, const FeatureField& distorted_features,
                   P2pChannel channel) {
    if (original.count() == 0 || distorted.count() == 0) {
        throw Error(ErrorCode::DegenerateCloud, "point-to-point needs nonempty clouds");
    }
    const KdTree original_tree(original.positions);
    const KdTree distorted_tree(distorted.positions);
    const double forward =
        directed_p2p(original, original_features, distorted, distorted_features, distorted_tree,
                     channel);
    const double backward =
        directed_p2p(distorted, distorted_features, original, original_features, original_tree,
                     channel);
    return std::max(forward, backward);
}

}  // namespace pcq
