#include "pcq/pipeline.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "pcq/error.hpp"
#include "pcq/hash.hpp"
#include "pcq/model.hpp"
#include "pcq/multiscale.hpp"
#include "pcq/ply_io.hpp"
#include "pcq/rbf.hpp"
#include "pcq/rng.hpp"

namespace pcq {

namespace {

constexpr std::uint32_t kDiffCacheMagic = 0x44514350u;  // "PCQD"
constexpr std::uint32_t kDiffCacheVersion = 1;
constexpr std::uint32_t kFeatureCacheMagic = 0x46514350u;  // "PCQF"
constexpr std::uint32_t kFeatureCacheVersion = 1;
constexpr std::uint32_t kTensorCacheMagic = 0x54514350u;  // "PCQT"
constexpr std::uint32_t kTensorCacheVersion = 1;

std::uint64_t cloud_hash(const NormalizedCloud& cloud) {
    Fnv1a h;
    const std::uint64_t n = cloud.count();
    h.update_value(n);
    h.update_value(cloud.has_color);
    for (const Vec3& p : cloud.positions) {
        h.update_value(p.x);
        h.update_value(p.y);
        h.update_value(p.z);
    }
    for (const Color& c : cloud.colors) {
        h.update_value(c.r);
        h.update_value(c.g);
        h.update_value(c.b);
    }
    return h.digest();
}

std::uint64_t config_hash(const PipelineConfig& cfg) {
    Fnv1a h;
    for (double s : cfg.scales) h.update_value(s);
    h.update_value(cfg.neighbor_count);
    h.update_value(cfg.curvature_k);
    h.update_value(cfg.reference_voxel);
    h.update_value(cfg.reference_max);
    h.update_value(cfg.enable_curvature);
    h.update_value(cfg.enable_luma);
    h.update_value(cfg.enable_chroma);
    h.update_value(cfg.seed);
    return h.digest();
}

std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    Fnv1a h;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h.update(buf, static_cast<std::size_t>(in.gcount()));
    }
    return h.digest();
}

std::string hex64(std::uint64_t v) {
    std::ostringstream out;
    out << std::hex << std::setfill('0') << std::setw(16) << v;
    return out.str();
}

void zero_disabled_groups(FeatureDiffVector& v, const PipelineConfig& cfg) {
    for (ScaleTag scale : kScaleTags) {
        for (FeatureKind feature : kFeatureKinds) {
            const bool enabled = (feature == FeatureKind::Curvature && cfg.enable_curvature) ||
                                 (feature == FeatureKind::Luma && cfg.enable_luma) ||
                                 (feature == FeatureKind::Chroma && cfg.enable_chroma);
            if (enabled) continue;
            for (std::size_t k = 0; k < kCoeffCount; ++k) v.at(scale, feature, k) = 0.0;
        }
    }
}

bool load_feature_cache(const std::string& path, std::size_t n, FeatureField& field) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    std::uint32_t magic = 0, version = 0;
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&magic), 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&count), 8);
    if (!in || magic != kFeatureCacheMagic || version != kFeatureCacheVersion || count != n) {
        return false;
    }
    field.curvature.resize(n);
    field.luma.resize(n);
    field.chroma.resize(n);
    const auto bytes = static_cast<std::streamsize>(n * sizeof(double));
    in.read(reinterpret_cast<char*>(field.curvature.data()), bytes);
    in.read(reinterpret_cast<char*>(field.luma.data()), bytes);
    in.read(reinterpret_cast<char*>(field.chroma.data()), bytes);
    return static_cast<bool>(in);
}

void store_feature_cache(const std::string& path, const FeatureField& field) {
    std::ofstream out(path, std::ios::binary);
    if (!out) return;  // cache writes are best-effort
    const std::uint64_t count = field.curvature.size();
    out.write(reinterpret_cast<const char*>(&kFeatureCacheMagic), 4);
    out.write(reinterpret_cast<const char*>(&kFeatureCacheVersion), 4);
    out.write(reinterpret_cast<const char*>(&count), 8);
    const auto bytes = static_cast<std::streamsize>(count * sizeof(double));
    out.write(reinterpret_cast<const char*>(field.curvature.data()), bytes);
    out.write(reinterpret_cast<const char*>(field.luma.data()), bytes);
    out.write(reinterpret_cast<const char*>(field.chroma.data()), bytes);
}

/// Per-scale features, read through the cache when a directory is set.
FeatureField scale_features(const NormalizedCloud& cloud, const PipelineConfig& config,
                            const std::string& cache_dir) {
    if (cache_dir.empty()) return extract_features(cloud, config.curvature_k);

    Fnv1a key;
    key.update_value(cloud_hash(cloud));
    key.update_value(static_cast<std::uint64_t>(config.curvature_k));
    const std::string path =
        (std::filesystem::path(cache_dir) / ("features-" + hex64(key.digest()) + ".bin"))
            .string();

    FeatureField field;
    if (load_feature_cache(path, cloud.count(), field)) {
        field.cloud = &cloud;
        return field;
    }
    field = extract_features(cloud, config.curvature_k);
    std::filesystem::create_directories(cache_dir);
    store_feature_cache(path, field);
    return field;
}

bool load_tensor_cache(const std::string& path, const ReferenceSet& input_refs, TensorFit& fit) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    std::uint32_t magic = 0, version = 0, scales = 0, features = 0, patch = 0;
    std::uint64_t surviving = 0, dropped_count = 0;
    in.read(reinterpret_cast<char*>(&magic), 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&surviving), 8);
    in.read(reinterpret_cast<char*>(&scales), 4);
    in.read(reinterpret_cast<char*>(&features), 4);
    in.read(reinterpret_cast<char*>(&patch), 4);
    if (!in || magic != kTensorCacheMagic || version != kTensorCacheVersion || scales != 3 ||
        features != 3 || patch != kPatchSize) {
        return false;
    }
    fit.kept.resize(surviving);
    in.read(reinterpret_cast<char*>(fit.kept.data()),
            static_cast<std::streamsize>(surviving * 8));
    in.read(reinterpret_cast<char*>(&dropped_count), 8);
    if (!in || surviving + dropped_count != input_refs.count()) return false;
    fit.dropped.resize(dropped_count);
    in.read(reinterpret_cast<char*>(fit.dropped.data()),
            static_cast<std::streamsize>(dropped_count * 8));

    fit.tensor.refs.points.clear();
    for (std::size_t t : fit.kept) {
        if (t >= input_refs.count()) return false;
        fit.tensor.refs.points.push_back(input_refs.points[t]);
    }
    fit.tensor.records.assign(surviving * 9, RbfCoefficients{});
    for (RbfCoefficients& rec : fit.tensor.records) {
        rec.omega.resize(kPatchSize);
        in.read(reinterpret_cast<char*>(rec.omega.data()),
                static_cast<std::streamsize>(kPatchSize * sizeof(double)));
        in.read(reinterpret_cast<char*>(&rec.a), 8);
        in.read(reinterpret_cast<char*>(&rec.b), 8);
        in.read(reinterpret_cast<char*>(&rec.c), 8);
        in.read(reinterpret_cast<char*>(&rec.d), 8);
    }
    return static_cast<bool>(in);
}

void store_tensor_cache(const std::string& path, const TensorFit& fit) {
    std::ofstream out(path, std::ios::binary);
    if (!out) return;  // cache writes are best-effort
    const std::uint64_t surviving = fit.kept.size();
    const std::uint64_t dropped_count = fit.dropped.size();
    const std::uint32_t scales = 3, features = 3, patch = kPatchSize;
    out.write(reinterpret_cast<const char*>(&kTensorCacheMagic), 4);
    out.write(reinterpret_cast<const char*>(&kTensorCacheVersion), 4);
    out.write(reinterpret_cast<const char*>(&surviving), 8);
    out.write(reinterpret_cast<const char*>(&scales), 4);
    out.write(reinterpret_cast<const char*>(&features), 4);
    out.write(reinterpret_cast<const char*>(&patch), 4);
    out.write(reinterpret_cast<const char*>(fit.kept.data()),
              static_cast<std::streamsize>(surviving * 8));
    out.write(reinterpret_cast<const char*>(&dropped_count), 8);
    out.write(reinterpret_cast<const char*>(fit.dropped.data()),
              static_cast<std::streamsize>(dropped_count * 8));
    for (const RbfCoefficients& rec : fit.tensor.records) {
        out.write(reinterpret_cast<const char*>(rec.omega.data()),
                  static_cast<std::streamsize>(kPatchSize * sizeof(double)));
        out.write(reinterpret_cast<const char*>(&rec.a), 8);
        out.write(reinterpret_cast<const char*>(&rec.b), 8);
        out.write(reinterpret_cast<const char*>(&rec.c), 8);
        out.write(reinterpret_cast<const char*>(&rec.d), 8);
    }
}

/// Coefficient tensor for one side of a pair, read through the cache when a
/// directory is set. Keyed by the cloud's content, the shared reference set
/// and the knobs the tensor depends on.
TensorFit fit_tensor_cached(const ScaleSet& scales, const std::array<FeatureField, 3>& fields,
                            const ReferenceSet& refs, std::uint64_t side_hash,
                            const PipelineConfig& config, const std::string& cache_dir) {
    if (cache_dir.empty()) return fit_coefficient_tensor(scales, fields, refs);

    Fnv1a key;
    key.update_value(side_hash);
    for (const Vec3& p : refs.points) {
        key.update_value(p.x);
        key.update_value(p.y);
        key.update_value(p.z);
    }
    for (double s : config.scales) key.update_value(s);
    key.update_value(static_cast<std::uint64_t>(config.curvature_k));
    const std::string path =
        (std::filesystem::path(cache_dir) / ("tensor-" + hex64(key.digest()) + ".bin")).string();

    TensorFit fit;
    if (load_tensor_cache(path, refs, fit)) return fit;
    fit = fit_coefficient_tensor(scales, fields, refs);
    std::filesystem::create_directories(cache_dir);
    store_tensor_cache(path, fit);
    return fit;
}

bool load_diff_cache(const std::string& path, FeatureDiffVector& v, PairMetadata& meta) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    std::uint32_t magic = 0, version = 0;
    std::uint64_t ref_count = 0, dropped = 0;
    in.read(reinterpret_cast<char*>(&magic), 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    if (!in || magic != kDiffCacheMagic || version != kDiffCacheVersion) return false;
    in.read(reinterpret_cast<char*>(&ref_count), 8);
    in.read(reinterpret_cast<char*>(&dropped), 8);
    in.read(reinterpret_cast<char*>(v.values.data()),
            static_cast<std::streamsize>(v.values.size() * sizeof(double)));
    if (!in) return false;
    meta.reference_count = ref_count;
    meta.dropped_references = dropped;
    return true;
}

void store_diff_cache(const std::string& path, const FeatureDiffVector& v,
                      const PairMetadata& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) return;  // cache writes are best-effort
    const std::uint64_t ref_count = meta.reference_count;
    const std::uint64_t dropped = meta.dropped_references;
    out.write(reinterpret_cast<const char*>(&kDiffCacheMagic), 4);
    out.write(reinterpret_cast<const char*>(&kDiffCacheVersion), 4);
    out.write(reinterpret_cast<const char*>(&ref_count), 8);
    out.write(reinterpret_cast<const char*>(&dropped), 8);
    out.write(reinterpret_cast<const char*>(v.values.data()),
              static_cast<std::streamsize>(v.values.size() * sizeof(double)));
}

}  // namespace

std::string resolve_cache_dir(const PipelineConfig& config) {
    if (!config.cache_dir.empty()) return config.cache_dir;
    if (const char* env = std::getenv("PCQ_CACHE_DIR")) return env;
    return "";
}

FeatureDiffVector extract_pair_clouds(const NormalizedCloud& original,
                                      const NormalizedCloud& distorted,
                                      const PipelineConfig& config, PairMetadata* meta) {
    const ScaleSet scales_o = build_scale_set(original, config.scales);
    const ScaleSet scales_d = build_scale_set(distorted, config.scales);

    const std::string cache_dir = resolve_cache_dir(config);
    std::array<FeatureField, 3> fields_o, fields_d;
    for (std::size_t s = 0; s < 3; ++s) {
        fields_o[s] = scale_features(scales_o.clouds[s], config, cache_dir);
        fields_d[s] = scale_features(scales_d.clouds[s], config, cache_dir);
    }

    const ReferenceSet refs = select_reference_points(
        original,
        {config.reference_voxel, config.reference_max, derive_seed(config.seed, "refs")});

    const TensorFit fit_o =
        fit_tensor_cached(scales_o, fields_o, refs, cloud_hash(original), config, cache_dir);
    const TensorFit fit_d =
        fit_tensor_cached(scales_d, fields_d, refs, cloud_hash(distorted), config, cache_dir);
    const auto [tensor_o, tensor_d] = align_tensors(fit_o, fit_d);

    FeatureDiffVector diff = aggregate_diffs(tensor_o, tensor_d);
    zero_disabled_groups(diff, config);

    if (meta) {
        meta->reference_count = tensor_o.count();
        meta->dropped_references = refs.count() - tensor_o.count();
        meta->cache_hit = false;
    }
    return diff;
}

FeatureDiffVector extract_pair_raw(const RawPointCloud& original,
                                   const RawPointCloud& distorted,
                                   const PipelineConfig& config, PairMetadata* meta) {
    const NormalizationParams params = compute_norm_params(original);
    return extract_pair_clouds(normalize(original, params), normalize(distorted, params), config,
                               meta);
}

FeatureDiffVector extract_pair(const std::string& original_path,
                               const std::string& distorted_path, const PipelineConfig& config,
                               PairMetadata* meta) {
    const std::string cache_dir = resolve_cache_dir(config);
    std::string cache_path;
    if (!cache_dir.empty()) {
        Fnv1a key;
        key.update_value(file_hash(original_path));
        key.update_value(file_hash(distorted_path));
        key.update_value(config_hash(config));
        cache_path = (std::filesystem::path(cache_dir) / ("diff-" + hex64(key.digest()) + ".bin"))
                         .string();
        FeatureDiffVector cached;
        PairMetadata cached_meta;
        if (load_diff_cache(cache_path, cached, cached_meta)) {
            if (meta) {
                *meta = cached_meta;
                meta->cache_hit = true;
            }
            return cached;
        }
    }

    PairMetadata local_meta;
    const FeatureDiffVector diff = extract_pair_raw(load_ply(original_path),
                                                    load_ply(distorted_path), config, &local_meta);
    if (!cache_path.empty()) {
        std::filesystem::create_directories(std::filesystem::path(cache_path).parent_path());
        store_diff_cache(cache_path, diff, local_meta);
    }
    if (meta) *meta = local_meta;
    return diff;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open manifest " + path);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();

    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;

        std::vector<std::string> cols;
        std::istringstream ls(line);
        std::string col;
        while (std::getline(ls, col, ',')) cols.push_back(col);
        if (line_no == 1 && cols.size() == 4 && cols[0] == "id") continue;  // header
        if (cols.size() != 4) {
            throw Error(ErrorCode::ParseError,
                        "manifest line " + std::to_string(line_no) + ": expected 4 columns");
        }

        ManifestEntry entry;
        entry.id = cols[0];
        auto resolve = [&](const std::string& p) {
            const std::filesystem::path fp(p);
            return fp.is_absolute() ? fp.string() : (base / fp).string();
        };
        entry.original_path = resolve(cols[1]);
        entry.distorted_path = resolve(cols[2]);
        try {
            std::size_t pos = 0;
            entry.mos = std::stod(cols[3], &pos);
            if (pos != cols[3].size()) throw std::invalid_argument(cols[3]);
        } catch (const std::exception&) {
            throw Error(ErrorCode::ParseError,
                        "manifest line " + std::to_string(line_no) + ": bad mos '" + cols[3] +
                            "'");
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

Dataset extract_dataset(const std::vector<ManifestEntry>& manifest,
                        const PipelineConfig& config) {
    Dataset dataset;
    dataset.ids.reserve(manifest.size());
    dataset.diffs.reserve(manifest.size());
    dataset.mos.reserve(manifest.size());
    for (const ManifestEntry& entry : manifest) {
        dataset.ids.push_back(entry.id);
        dataset.diffs.push_back(extract_pair(entry.original_path, entry.distorted_path, config));
        dataset.mos.push_back(entry.mos);
    }
    return dataset;
}

void write_diff_long_csv(const FeatureDiffVector& v, std::ostream& out) {
    out << "group_scale,group_feature,k,value\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (ScaleTag scale : kScaleTags) {
        for (FeatureKind feature : kFeatureKinds) {
            for (std::size_t k = 0; k < kCoeffCount; ++k) {
                out << scale_name(scale) << "," << feature_name(feature) << "," << k << ","
                    << v.at(scale, feature, k) << "\n";
            }
        }
    }
}

void write_dataset_csv(const Dataset& dataset, std::ostream& out) {
    out << "id,mos";
    for (ScaleTag scale : kScaleTags) {
        for (FeatureKind feature : kFeatureKinds) {
            for (std::size_t k = 0; k < kCoeffCount; ++k) {
                out << "," << scale_name(scale) << "_" << feature_name(feature) << "_" << k;
            }
        }
    }
    out << "\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        out << dataset.ids[i] << "," << dataset.mos[i];
        for (double value : dataset.diffs[i].values) out << "," << value;
        out << "\n";
    }
}

std::vector<EvalReport> eval_rounds(const Dataset& dataset, const PipelineConfig& config) {
    const std::vector<double> mos01 = normalize_mos(dataset.mos, config.mos_lo, config.mos_hi);
    const SplitPlan plan = shuffle_split(dataset.size(), 0.6, 5, config.seed);

    std::vector<EvalReport> reports;
    reports.reserve(plan.rounds.size());
    for (std::size_t r = 0; r < plan.rounds.size(); ++r) {
        const SplitPlan::Round& round = plan.rounds[r];

        std::vector<FeatureDiffVector> train_rows;
        std::vector<double> train_mos;
        train_rows.reserve(round.train.size());
        for (std::size_t i : round.train) {
            train_rows.push_back(dataset.diffs[i]);
            train_mos.push_back(mos01[i]);
        }

        TrainConfig tc = config.train;
        tc.seed = derive_seed(config.seed, "round-train", r);
        const TrainResult result = train(train_rows, train_mos, tc);

        std::vector<double> pred, truth;
        pred.reserve(round.test.size());
        for (std::size_t i : round.test) {
            pred.push_back(predict(result.model, result.stats, dataset.diffs[i]));
            truth.push_back(mos01[i]);
        }
        reports.push_back(evaluate(pred, truth));
    }
    return reports;
}

EvalReport mean_report(const std::vector<EvalReport>& rounds) {
    EvalReport mean;
    if (rounds.empty()) return mean;
    for (const EvalReport& r : rounds) {
        mean.plcc += r.plcc;
        mean.srocc += r.srocc;
        mean.krocc += r.krocc;
        mean.rmse += r.rmse;
        mean.n += r.n;
    }
    const double k = static_cast<double>(rounds.size());
    mean.plcc /= k;
    mean.srocc /= k;
    mean.krocc /= k;
    mean.rmse /= k;
    mean.logistic.converged = true;
    for (const EvalReport& r : rounds) {
        mean.logistic.converged = mean.logistic.converged && r.logistic.converged;
    }
    return mean;
}

}  // namespace pcq
