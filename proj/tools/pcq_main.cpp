#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pcq/config.hpp"
#include "pcq/distort.hpp"
#include "pcq/error.hpp"
#include "pcq/features.hpp"
#include "pcq/model.hpp"
#include "pcq/multiscale.hpp"
#include "pcq/pipeline.hpp"
#include "pcq/ply_io.hpp"
#include "pcq/rbf.hpp"
#include "pcq/rng.hpp"
#include "pcq/stats.hpp"
#include "pcq/threading.hpp"

namespace {

using namespace pcq;

struct CommonOpts {
    std::string config_path;
    std::string cache_dir;
    std::string output;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "key=value config file");
    cmd->add_option("--cache-dir", o.cache_dir,
                    "diff-vector cache directory (overrides config and PCQ_CACHE_DIR)");
    o.seed_opt = cmd->add_option("--seed", o.seed, "root seed (overrides config)");
    cmd->add_option("--threads", o.threads, "worker threads, 0 = all hardware threads");
    cmd->add_option("-o,--output", o.output, "write the primary output here instead of stdout");
}

PipelineConfig make_config(const CommonOpts& o) {
    PipelineConfig cfg = o.config_path.empty() ? PipelineConfig{} : load_config(o.config_path);
    if (o.seed_opt != nullptr && o.seed_opt->count() > 0) {
        cfg.seed = o.seed;
        cfg.train.seed = o.seed;
    }
    if (!o.cache_dir.empty()) cfg.cache_dir = o.cache_dir;
    set_worker_threads(o.threads);
    return cfg;
}

/// Primary output goes to --output when given, stdout otherwise.
struct OutStream {
    explicit OutStream(const std::string& path) {
        if (!path.empty()) {
            file.open(path, std::ios::binary);
            if (!file) throw Error(ErrorCode::IoError, "cannot write " + path);
            out = &file;
        }
    }

    std::ostream& operator*() { return *out; }

    std::ofstream file;
    std::ostream* out = &std::cout;
};

RawPointCloud to_raw(const NormalizedCloud& cloud) {
    return RawPointCloud{cloud.positions, cloud.colors, cloud.has_color};
}

void write_metadata(std::ostream& out, const PairMetadata& meta) {
    out << "# reference_count=" << meta.reference_count << "\n";
    out << "# dropped_references=" << meta.dropped_references << "\n";
    out << "# cache_hit=" << (meta.cache_hit ? "true" : "false") << "\n";
}

int run_extract(const CommonOpts& o, const std::string& original, const std::string& distorted) {
    const PipelineConfig cfg = make_config(o);
    PairMetadata meta;
    const FeatureDiffVector diff = extract_pair(original, distorted, cfg, &meta);

    OutStream os(o.output);
    echo_config(cfg, *os);
    write_metadata(*os, meta);
    write_diff_long_csv(diff, *os);
    return 0;
}

int run_score(const CommonOpts& o, const std::string& original, const std::string& distorted,
              const std::string& model_path) {
    const PipelineConfig cfg = make_config(o);
    const LoadedModel lm = load_model(model_path);
    PairMetadata meta;
    const FeatureDiffVector diff = extract_pair(original, distorted, cfg, &meta);
    const double score = predict(lm.model, lm.stats, diff);

    std::cout << std::fixed << std::setprecision(6) << score << "\n";
    if (!o.output.empty()) {
        nlohmann::ordered_json report;
        report["score"] = score;
        report["original"] = original;
        report["distorted"] = distorted;
        report["model"] = model_path;
        report["reference_count"] = meta.reference_count;
        report["dropped_references"] = meta.dropped_references;
        report["cache_hit"] = meta.cache_hit;
        report["seed"] = cfg.seed;
        OutStream os(o.output);
        *os << report.dump(2) << "\n";
    }
    return 0;
}

int run_train(const CommonOpts& o, const std::string& manifest_path,
              const std::string& model_out) {
    const PipelineConfig cfg = make_config(o);
    const std::vector<ManifestEntry> manifest = load_manifest(manifest_path);
    const Dataset dataset = extract_dataset(manifest, cfg);
    const std::vector<double> mos01 = normalize_mos(dataset.mos, cfg.mos_lo, cfg.mos_hi);
    const TrainResult result = train(dataset.diffs, mos01, cfg.train);
    save_model(result.model, result.stats, model_out);

    OutStream os(o.output);
    echo_config(cfg, *os);
    *os << "epoch,lr,total,mse,plcc_loss,rank_loss\n";
    *os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t e = 0; e < result.history.size(); ++e) {
        const EpochStats& es = result.history[e];
        *os << e << "," << es.lr << "," << es.loss.total << "," << es.loss.mse << ","
            << es.loss.plcc_loss << "," << es.loss.rank_loss << "\n";
    }
    return 0;
}

void write_eval_row(std::ostream& out, const std::string& dataset, const std::string& round,
                    const EvalReport& r) {
    out << dataset << "," << round << "," << r.plcc << "," << r.srocc << "," << r.krocc << ","
        << r.rmse << "," << r.n << "," << (r.logistic.converged ? "true" : "false") << "\n";
}

int run_eval(const CommonOpts& o, const std::string& manifest_path,
             const std::string& model_path) {
    const PipelineConfig cfg = make_config(o);
    const std::vector<ManifestEntry> manifest = load_manifest(manifest_path);
    if (manifest.size() < 10) {
        throw Error(ErrorCode::InsufficientData, "evaluation needs at least 10 manifest rows, got " +
                                                     std::to_string(manifest.size()));
    }
    const Dataset dataset = extract_dataset(manifest, cfg);

    std::vector<EvalReport> rounds;
    if (model_path.empty()) {
        rounds = eval_rounds(dataset, cfg);
    } else {
        // Fixed pretrained model: same splits, no per-round training.
        const LoadedModel lm = load_model(model_path);
        const std::vector<double> mos01 = normalize_mos(dataset.mos, cfg.mos_lo, cfg.mos_hi);
        const SplitPlan plan = shuffle_split(dataset.size(), 0.6, 5, cfg.seed);
        for (const SplitPlan::Round& round : plan.rounds) {
            std::vector<double> pred, truth;
            pred.reserve(round.test.size());
            for (std::size_t i : round.test) {
                pred.push_back(predict(lm.model, lm.stats, dataset.diffs[i]));
                truth.push_back(mos01[i]);
            }
            rounds.push_back(evaluate(pred, truth));
        }
    }

    const std::string name = std::filesystem::path(manifest_path).stem().string();
    OutStream os(o.output);
    echo_config(cfg, *os);
    *os << "dataset,round,plcc,srocc,krocc,rmse,n,converged\n";
    *os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t r = 0; r < rounds.size(); ++r) {
        write_eval_row(*os, name, std::to_string(r + 1), rounds[r]);
    }
    write_eval_row(*os, name, "mean", mean_report(rounds));
    return 0;
}

int run_bench(const CommonOpts& o, const std::string& cloud_path) {
    const PipelineConfig cfg = make_config(o);
    using Clock = std::chrono::steady_clock;
    auto seconds = [](Clock::time_point a, Clock::time_point b) {
        return std::chrono::duration<double>(b - a).count();
    };

    const auto t0 = Clock::now();
    const RawPointCloud raw = load_ply(cloud_path);
    const auto t1 = Clock::now();

    const NormalizedCloud norm = normalize(raw, compute_norm_params(raw));
    const ScaleSet scales = build_scale_set(norm, cfg.scales);
    const auto t2 = Clock::now();

    std::array<FeatureField, 3> fields;
    for (std::size_t s = 0; s < 3; ++s) {
        fields[s] = extract_features(scales.clouds[s], cfg.curvature_k);
    }
    const auto t3 = Clock::now();

    const ReferenceSet refs = select_reference_points(
        norm, {cfg.reference_voxel, cfg.reference_max, derive_seed(cfg.seed, "refs")});
    const TensorFit fit = fit_coefficient_tensor(scales, fields, refs);
    const auto t4 = Clock::now();

    const auto [to, td] = align_tensors(fit, fit);
    const FeatureDiffVector diff = aggregate_diffs(to, td);
    const auto t5 = Clock::now();
    (void)diff;

    OutStream os(o.output);
    *os << "# points=" << raw.count() << "\n";
    *os << "# references=" << fit.tensor.count() << "\n";
    *os << std::fixed << std::setprecision(6);
    *os << "stage,seconds\n";
    *os << "parse," << seconds(t0, t1) << "\n";
    *os << "scales," << seconds(t1, t2) << "\n";
    *os << "features," << seconds(t2, t3) << "\n";
    *os << "fit," << seconds(t3, t4) << "\n";
    *os << "diff," << seconds(t4, t5) << "\n";
    *os << "total," << seconds(t0, t5) << "\n";
    return 0;
}

DistortionKind parse_kind(const std::string& name) {
    if (name == "gaussian") return DistortionKind::GaussianGeometry;
    if (name == "dropout") return DistortionKind::Dropout;
    if (name == "quantize") return DistortionKind::ColorQuantize;
    throw Error(ErrorCode::ConfigError, "unknown distortion kind '" + name + "'");
}

int run_distort(const CommonOpts& o, const std::string& cloud_path, const std::string& kind_name,
                const std::vector<double>& levels, const std::string& out_dir) {
    const PipelineConfig cfg = make_config(o);
    const DistortionKind kind = parse_kind(kind_name);
    const RawPointCloud raw = load_ply(cloud_path);
    const NormalizedCloud norm = normalize(raw, compute_norm_params(raw));
    const auto ladder = distortion_ladder(norm, kind, levels, cfg.seed);

    std::filesystem::create_directories(out_dir);
    const std::string stem = std::filesystem::path(cloud_path).stem().string();
    const std::string original_name = stem + "_original.ply";
    save_ply(to_raw(norm), (std::filesystem::path(out_dir) / original_name).string());

    std::ofstream manifest(std::filesystem::path(out_dir) / "manifest.csv", std::ios::binary);
    if (!manifest) throw Error(ErrorCode::IoError, "cannot write manifest in " + out_dir);
    manifest << "id,original_path,distorted_path,mos\n";
    manifest << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        const std::string id = stem + "_" + kind_name + "_" + std::to_string(i);
        const std::string name = id + ".ply";
        save_ply(to_raw(ladder[i].second), (std::filesystem::path(out_dir) / name).string());
        const double mos =
            ladder.size() > 1 ? 1.0 - static_cast<double>(i) / (ladder.size() - 1) : 1.0;
        manifest << id << "," << original_name << "," << name << "," << mos << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Full-reference point cloud quality assessment"};
    app.require_subcommand(1);

    CommonOpts extract_opts;
    std::string extract_original, extract_distorted;
    CLI::App* extract = app.add_subcommand("extract", "Emit the 306-dim diff vector for a pair");
    extract->add_option("original", extract_original, "reference PLY")->required();
    extract->add_option("distorted", extract_distorted, "distorted PLY")->required();
    add_common(extract, extract_opts);

    CommonOpts score_opts;
    std::string score_original, score_distorted, score_model;
    CLI::App* score = app.add_subcommand("score", "Predict a quality score for a pair");
    score->add_option("original", score_original, "reference PLY")->required();
    score->add_option("distorted", score_distorted, "distorted PLY")->required();
    score->add_option("model", score_model, "trained model file")->required();
    add_common(score, score_opts);

    CommonOpts train_opts;
    std::string train_manifest, train_model_out = "model.pcq";
    CLI::App* train_cmd = app.add_subcommand("train", "Train a model from a manifest");
    train_cmd->add_option("manifest", train_manifest, "CSV id,original_path,distorted_path,mos")
        ->required();
    train_cmd->add_option("--model-out", train_model_out, "where to write the model file");
    add_common(train_cmd, train_opts);

    CommonOpts eval_opts;
    std::string eval_manifest, eval_model;
    CLI::App* eval_cmd =
        app.add_subcommand("eval", "Shuffle-split evaluation (5 rounds, 60/40) on a manifest");
    eval_cmd->add_option("manifest", eval_manifest, "CSV id,original_path,distorted_path,mos")
        ->required();
    eval_cmd->add_option("--model", eval_model,
                         "evaluate this pretrained model instead of training per round");
    add_common(eval_cmd, eval_opts);

    CommonOpts bench_opts;
    std::string bench_cloud;
    CLI::App* bench = app.add_subcommand("bench", "Per-stage pipeline timings for one cloud");
    bench->add_option("cloud", bench_cloud, "PLY file")->required();
    add_common(bench, bench_opts);

    CommonOpts distort_opts;
    std::string distort_cloud, distort_kind = "gaussian", distort_out_dir;
    std::vector<double> distort_levels = {0.0, 0.5, 1.0, 2.0, 4.0};
    CLI::App* distort = app.add_subcommand("distort", "Write a synthetic distortion ladder");
    distort->add_option("cloud", distort_cloud, "PLY file")->required();
    distort->add_option("--kind", distort_kind, "gaussian | dropout | quantize");
    distort->add_option("--levels", distort_levels, "comma-separated levels")->delimiter(',');
    distort->add_option("--out-dir", distort_out_dir, "output directory")->required();
    add_common(distort, distort_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (extract->parsed()) return run_extract(extract_opts, extract_original, extract_distorted);
        if (score->parsed()) return run_score(score_opts, score_original, score_distorted, score_model);
        if (train_cmd->parsed()) return run_train(train_opts, train_manifest, train_model_out);
        if (eval_cmd->parsed()) return run_eval(eval_opts, eval_manifest, eval_model);
        if (bench->parsed()) return run_bench(bench_opts, bench_cloud);
        if (distort->parsed()) {
            return run_distort(distort_opts, distort_cloud, distort_kind, distort_levels,
                               distort_out_dir);
        }
    } catch (const pcq::Error& e) {
        std::cerr << "error [" << error_code_name(e.code()) << "]: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
