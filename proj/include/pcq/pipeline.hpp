#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pcq/cloud.hpp"
#include "pcq/config.hpp"
#include "pcq/diff.hpp"
#include "pcq/stats.hpp"

namespace pcq {

struct PairMetadata {
    std::size_t reference_count = 0;    // reference points surviving in both clouds
    std::size_t dropped_references = 0;
    bool cache_hit = false;
};

/// Full pair pipeline on already-normalized clouds: scale sets, per-scale
/// features, shared reference points from the original, coefficient tensors
/// for both, aligned difference aggregation.
FeatureDiffVector extract_pair_clouds(const NormalizedCloud& original,
                                      const NormalizedCloud& distorted,
                                      const PipelineConfig& config,
                                      PairMetadata* meta = nullptr);

/// As above from raw clouds; both are normalized with the original's params.
FeatureDiffVector extract_pair_raw(const RawPointCloud& original,
                                   const RawPointCloud& distorted,
                                   const PipelineConfig& config, PairMetadata* meta = nullptr);

/// As above from PLY files, with a content-addressed cache when a cache
/// directory is configured.
FeatureDiffVector extract_pair(const std::string& original_path,
                               const std::string& distorted_path, const PipelineConfig& config,
                               PairMetadata* meta = nullptr);

struct ManifestEntry {
    std::string id;
    std::string original_path;
    std::string distorted_path;
    double mos = 0.0;
};

/// CSV manifest `id,original_path,distorted_path,mos` (header optional).
/// Relative paths are resolved against the manifest's directory.
std::vector<ManifestEntry> load_manifest(const std::string& path);

struct Dataset {
    std::vector<std::string> ids;
    std::vector<FeatureDiffVector> diffs;
    std::vector<double> mos;  // raw, not yet rescaled

    std::size_t size() const { return ids.size(); }
};

Dataset extract_dataset(const std::vector<ManifestEntry>& manifest,
                        const PipelineConfig& config);

/// Long-form rows `group_scale,group_feature,k,value`.
void write_diff_long_csv(const FeatureDiffVector& v, std::ostream& out);

/// Flat layout: id, mos, then one column per dimension.
void write_dataset_csv(const Dataset& dataset, std::ostream& out);

/// The repeated shuffle-split protocol: per round, train on the 60% split
/// and evaluate on the held-out 40%. MOS values are rescaled to [0,1] with
/// the configured range before training.
std::vector<EvalReport> eval_rounds(const Dataset& dataset, const PipelineConfig& config);

EvalReport mean_report(const std::vector<EvalReport>& rounds);

/// Cache directory resolution: config value, else PCQ_CACHE_DIR, else "".
std::string resolve_cache_dir(const PipelineConfig& config);

}  // namespace pcq
