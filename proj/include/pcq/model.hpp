#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pcq/diff.hpp"

namespace pcq {

inline constexpr std::size_t kGroupWidth = 64;
inline constexpr std::size_t kScaleWidth = 3 * kGroupWidth;    // 192
inline constexpr std::size_t kGlobalWidth = 3 * kScaleWidth;   // 576
inline constexpr std::size_t kHeadWidth = 128;
inline constexpr std::size_t kAttentionRatio = 4;

struct Affine {
    Eigen::MatrixXd W;  // out x in
    Eigen::VectorXd b;
};

struct BatchNorm {
    Eigen::VectorXd scale, shift;
    Eigen::VectorXd running_mean, running_var;
};

/// One 34-dim coefficient group: projection to 64, then a residual block of
/// two affine+batch-norm layers.
struct GroupEncoder {
    Affine proj, lin1, lin2;
    BatchNorm bn1, bn2;
};

/// Channel gate F' = F * sigmoid(expand(silu(reduce(F)))), bottleneck 1/4.
struct AttentionBlock {
    Affine reduce, expand;
};

struct ModelParams {
    std::array<GroupEncoder, kGroupCount> encoders;
    std::array<AttentionBlock, 3> scale_attention;
    AttentionBlock global_attention;
    Affine head_hidden, head_out;
    std::uint64_t stats_hash = 0;  // ties the model to its PreprocessStats
};

struct TrainConfig {
    std::size_t epochs = 80;
    std::size_t batch_size = 32;
    double weight_decay = 1e-2;
    double lr0 = 1e-3;
    double lr_min = 1e-5;
    double lambda1 = 1.0;
    double lambda2 = 0.5;
    double margin = 0.05;
    std::uint64_t seed = 0;
};

struct LossBreakdown {
    double total = 0.0;
    double mse = 0.0;
    double plcc_loss = 0.0;
    double rank_loss = 0.0;
};

enum class RunMode { Train, Eval };

struct BnCache {
    Eigen::MatrixXd xhat;
    Eigen::ArrayXd inv_std;
};

struct GroupCache {
    Eigen::MatrixXd p, h0, n1, z1, r;
    BnCache bn1, bn2;
};

struct GateCache {
    Eigen::MatrixXd input, u, su, gate;
};

struct ForwardCache {
    std::array<GroupCache, kGroupCount> groups;
    std::array<GateCache, 3> scales;
    GateCache global;
    Eigen::MatrixXd head_in, h1, sh;
    RunMode mode = RunMode::Train;
};

ModelParams init_model(std::uint64_t seed);
ModelParams zeros_like(const ModelParams& shape);

/// inputs: B x 306, one preprocessed diff vector per row. Train mode uses
/// batch statistics and updates running stats; Eval mode is per-sample pure.
Eigen::VectorXd forward(ModelParams& params, const Eigen::MatrixXd& inputs, RunMode mode,
                        ForwardCache* cache = nullptr);
Eigen::VectorXd forward_eval(const ModelParams& params, const Eigen::MatrixXd& inputs);

LossBreakdown hybrid_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target,
                          double lambda1, double lambda2, double margin);
Eigen::VectorXd hybrid_loss_grad(const Eigen::VectorXd& pred, const Eigen::VectorXd& target,
                                 double lambda1, double lambda2, double margin);

/// Analytic gradients of the loss w.r.t. every trainable parameter, given
/// d(loss)/d(predictions). Running stats in the result are unused and zero.
ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                     const Eigen::MatrixXd& inputs, const Eigen::VectorXd& dpred);

struct AdamWState {
    ModelParams m, v;
    std::size_t step = 0;
};

/// Bias-corrected AdamW (beta1 0.9, beta2 0.999, eps 1e-8) with decoupled
/// decay; batch-norm scale/shift and biases are never decayed.
void adamw_step(ModelParams& params, const ModelParams& grads, AdamWState& state, double lr,
                double weight_decay);

double cosine_lr(std::size_t epoch, const TrainConfig& config);

struct EpochStats {
    double lr = 0.0;
    LossBreakdown loss;
};

struct TrainResult {
    ModelParams model;
    PreprocessStats stats;
    std::vector<EpochStats> history;
};

/// Full training loop: preprocessing stats fitted on these rows, seeded
/// per-epoch shuffling, cosine-annealed AdamW over the hybrid loss.
TrainResult train(const std::vector<FeatureDiffVector>& rows, const std::vector<double>& targets,
                  const TrainConfig& config);

/// Eval-mode score for one diff vector. The stats must be the ones the model
/// was trained with (hash check).
double predict(const ModelParams& model, const PreprocessStats& stats,
               const FeatureDiffVector& v);

void save_model(const ModelParams& model, const PreprocessStats& stats, const std::string& path);

struct LoadedModel {
    ModelParams model;
    PreprocessStats stats;
};

LoadedModel load_model(const std::string& path);

}  // namespace pcq
