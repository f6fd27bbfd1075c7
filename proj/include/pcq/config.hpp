#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>

#include "pcq/model.hpp"

namespace pcq {

/// Pipeline-wide settings, parsed from a plain-text key=value file. Every
/// field has a default so an absent file or key is never an error; unknown
/// keys are.
struct PipelineConfig {
    std::array<double, 3> scales = {2.0, 4.0, 8.0};
    std::size_t neighbor_count = 30;  // patch size; fixed by the 306-dim layout
    std::size_t curvature_k = 30;
    double reference_voxel = 16.0;
    std::size_t reference_max = 4096;
    bool enable_curvature = true;
    bool enable_luma = true;
    bool enable_chroma = true;
    TrainConfig train;
    std::string cache_dir;
    std::uint64_t seed = 0;
    double mos_lo = 0.0;
    double mos_hi = 1.0;
};

PipelineConfig parse_config(std::istream& in);
PipelineConfig parse_config_text(const std::string& text);
PipelineConfig load_config(const std::string& path);

/// Writes every key as `# key=value`, the run-manifest echo format.
void echo_config(const PipelineConfig& config, std::ostream& out);

}  // namespace pcq
