#include "pcq/distort.hpp"

#include <algorithm>
#include <cmath>

#include "pcq/error.hpp"
#include "pcq/rng.hpp"

namespace pcq {

const char* distortion_name(DistortionKind kind) {
    switch (kind) {
        case DistortionKind::GaussianGeometry: return "gaussian";
        case DistortionKind::Dropout: return "dropout";
        case DistortionKind::ColorQuantize: return "quantize";
    }
    return "?";
}

namespace {

NormalizedCloud gaussian_geometry(const NormalizedCloud& cloud, double sigma,
                                  std::uint64_t seed) {
    if (!(sigma >= 0.0)) {
        throw Error(ErrorCode::ConfigError, "gaussian sigma must be nonnegative");
    }
    if (sigma == 0.0) return cloud;

    NormalizedCloud out = cloud;
    Rng rng(seed);
    for (Vec3& p : out.positions) {
        p.x += sigma * rng.normal();
        p.y += sigma * rng.normal();
        p.z += sigma * rng.normal();
    }
    return out;
}

NormalizedCloud dropout(const NormalizedCloud& cloud, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0)) {
        throw Error(ErrorCode::ConfigError, "drop fraction must be in [0, 1)");
    }
    const std::size_t n = cloud.count();
    const std::size_t removed =
        static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
    const std::size_t kept = n - removed;
    if (kept < 30) {
        throw Error(ErrorCode::InsufficientDensity,
                    "dropout would leave " + std::to_string(kept) + " points, need at least 30");
    }
    if (removed == 0) return cloud;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    order.resize(kept);
    std::sort(order.begin(), order.end());

    NormalizedCloud out;
    out.has_color = cloud.has_color;
    out.positions.reserve(kept);
    out.colors.reserve(kept);
    for (std::size_t i : order) {
        out.positions.push_back(cloud.positions[i]);
        out.colors.push_back(cloud.colors[i]);
    }
    return out;
}

NormalizedCloud color_quantize(const NormalizedCloud& cloud, double level) {
    const int bits = static_cast<int>(level);
    if (static_cast<double>(bits) != level || bits < 1 || bits > 8) {
        throw Error(ErrorCode::ConfigError, "quantize bits must be an integer in [1, 8]");
    }
    if (bits == 8) return cloud;

    const int shift = 8 - bits;
    const double top = static_cast<double>((1 << bits) - 1);
    NormalizedCloud out = cloud;
    for (Color& c : out.colors) {
        c.r = static_cast<std::uint8_t>(std::lround((c.r >> shift) * 255.0 / top));
        c.g = static_cast<std::uint8_t>(std::lround((c.g >> shift) * 255.0 / top));
        c.b = static_cast<std::uint8_t>(std::lround((c.b >> shift) * 255.0 / top));
    }
    return out;
}

}  // namespace

NormalizedCloud apply_distortion(const NormalizedCloud& cloud, const DistortionSpec& spec) {
    switch (spec.kind) {
        case DistortionKind::GaussianGeometry:
            return gaussian_geometry(cloud, spec.level, spec.seed);
        case DistortionKind::Dropout:
            return dropout(cloud, spec.level, spec.seed);
        case DistortionKind::ColorQuantize:
            return color_quantize(cloud, spec.level);
    }
    throw Error(ErrorCode::ConfigError, "unknown distortion kind");
}

std::vector<std::pair<double, NormalizedCloud>> distortion_ladder(
    const NormalizedCloud& cloud, DistortionKind kind, const std::vector<double>& levels,
    std::uint64_t seed) {
    if (levels.empty()) {
        throw Error(ErrorCode::ConfigError, "distortion ladder needs at least one level");
    }
    std::vector<std::pair<double, NormalizedCloud>> ladder;
    ladder.reserve(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i) {
        ladder.emplace_back(levels[i],
                            apply_distortion(cloud, {kind, levels[i], seed + i}));
    }
    return ladder;
}

}  // namespace pcq
