#include "pcq/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "pcq/error.hpp"
#include "pcq/hash.hpp"
#include "pcq/rng.hpp"

namespace pcq {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr double kRunningVarFloor = 1e-5;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

constexpr std::uint32_t kModelMagic = 0x52514350u;  // "PCQR" little-endian
constexpr std::uint32_t kModelVersion = 1;

Affine make_affine(std::size_t out, std::size_t in) {
    Affine a;
    a.W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    a.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
    return a;
}

BatchNorm make_bn(std::size_t width, double scale, double running_var) {
    BatchNorm bn;
    const Eigen::Index w = static_cast<Eigen::Index>(width);
    bn.scale = Eigen::VectorXd::Constant(w, scale);
    bn.shift = Eigen::VectorXd::Zero(w);
    bn.running_mean = Eigen::VectorXd::Zero(w);
    bn.running_var = Eigen::VectorXd::Constant(w, running_var);
    return bn;
}

ModelParams make_shapes(double bn_scale, double bn_running_var) {
    ModelParams p;
    for (GroupEncoder& enc : p.encoders) {
        enc.proj = make_affine(kGroupWidth, kCoeffCount);
        enc.lin1 = make_affine(kGroupWidth, kGroupWidth);
        enc.lin2 = make_affine(kGroupWidth, kGroupWidth);
        enc.bn1 = make_bn(kGroupWidth, bn_scale, bn_running_var);
        enc.bn2 = make_bn(kGroupWidth, bn_scale, bn_running_var);
    }
    for (AttentionBlock& attn : p.scale_attention) {
        attn.reduce = make_affine(kScaleWidth / kAttentionRatio, kScaleWidth);
        attn.expand = make_affine(kScaleWidth, kScaleWidth / kAttentionRatio);
    }
    p.global_attention.reduce = make_affine(kGlobalWidth / kAttentionRatio, kGlobalWidth);
    p.global_attention.expand = make_affine(kGlobalWidth, kGlobalWidth / kAttentionRatio);
    p.head_hidden = make_affine(kHeadWidth, kGlobalWidth);
    p.head_out = make_affine(1, kHeadWidth);
    return p;
}

struct TensorRef {
    double* data;
    std::size_t size;
    bool decay;
};

void collect_affine(Affine& a, std::vector<TensorRef>& out) {
    out.push_back({a.W.data(), static_cast<std::size_t>(a.W.size()), true});
    out.push_back({a.b.data(), static_cast<std::size_t>(a.b.size()), false});
}

void collect_bn(BatchNorm& bn, bool include_running, std::vector<TensorRef>& out) {
    out.push_back({bn.scale.data(), static_cast<std::size_t>(bn.scale.size()), false});
    out.push_back({bn.shift.data(), static_cast<std::size_t>(bn.shift.size()), false});
    if (include_running) {
        out.push_back({bn.running_mean.data(), static_cast<std::size_t>(bn.running_mean.size()),
                       false});
        out.push_back({bn.running_var.data(), static_cast<std::size_t>(bn.running_var.size()),
                       false});
    }
}

/// Canonical tensor order shared by the optimizer and the file format.
std::vector<TensorRef> collect_tensors(ModelParams& p, bool include_running) {
    std::vector<TensorRef> out;
    for (GroupEncoder& enc : p.encoders) {
        collect_affine(enc.proj, out);
        collect_affine(enc.lin1, out);
        collect_bn(enc.bn1, include_running, out);
        collect_affine(enc.lin2, out);
        collect_bn(enc.bn2, include_running, out);
    }
    for (AttentionBlock& attn : p.scale_attention) {
        collect_affine(attn.reduce, out);
        collect_affine(attn.expand, out);
    }
    collect_affine(p.global_attention.reduce, out);
    collect_affine(p.global_attention.expand, out);
    collect_affine(p.head_hidden, out);
    collect_affine(p.head_out, out);
    return out;
}

void init_affine(Affine& a, Rng& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(a.W.cols()));
    double* w = a.W.data();
    for (Eigen::Index i = 0; i < a.W.size(); ++i) w[i] = rng.uniform(-bound, bound);
    a.b.setZero();
}

Eigen::MatrixXd affine_forward(const Affine& a, const Eigen::MatrixXd& x) {
    return (x * a.W.transpose()).rowwise() + a.b.transpose();
}

Eigen::MatrixXd silu(const Eigen::MatrixXd& x) {
    return x.array() / (1.0 + (-x.array()).exp());
}

Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& x) {
    const auto sig = 1.0 / (1.0 + (-x.array()).exp());
    return sig * (1.0 + x.array() * (1.0 - sig));
}

Eigen::MatrixXd bn_forward(BatchNorm& bn, const Eigen::MatrixXd& x, RunMode mode,
                           BnCache& cache) {
    if (mode == RunMode::Train) {
        const Eigen::RowVectorXd mean = x.colwise().mean();
        const Eigen::MatrixXd centered = x.rowwise() - mean;
        const Eigen::RowVectorXd var =
            centered.array().square().matrix().colwise().mean();
        const Eigen::VectorXd inv =
            (var.transpose().array() + kBnEps).rsqrt().matrix();
        cache.inv_std = inv.array();
        cache.xhat = centered * inv.asDiagonal();
        bn.running_mean = (1.0 - kBnMomentum) * bn.running_mean + kBnMomentum * mean.transpose();
        bn.running_var = ((1.0 - kBnMomentum) * bn.running_var.array() +
                          kBnMomentum * var.transpose().array())
                             .max(kRunningVarFloor)
                             .matrix();
    } else {
        const Eigen::VectorXd inv = (bn.running_var.array() + kBnEps).rsqrt().matrix();
        cache.inv_std = inv.array();
        cache.xhat = (x.rowwise() - bn.running_mean.transpose()) * inv.asDiagonal();
    }
    return (cache.xhat * bn.scale.asDiagonal()).rowwise() + bn.shift.transpose();
}

/// Train-mode batch-norm backward, through the batch statistics.
Eigen::MatrixXd bn_backward(const BatchNorm& bn, BatchNorm& grad, const BnCache& cache,
                            const Eigen::MatrixXd& dy) {
    grad.scale = (dy.array() * cache.xhat.array()).colwise().sum().transpose();
    grad.shift = dy.colwise().sum().transpose();

    const Eigen::RowVectorXd m1 = dy.colwise().mean();
    const Eigen::RowVectorXd m2 =
        (dy.array() * cache.xhat.array()).matrix().colwise().mean();
    const Eigen::VectorXd coeff =
        (bn.scale.array() * cache.inv_std).matrix();
    Eigen::MatrixXd dx = dy;
    dx.rowwise() -= m1;
    dx -= cache.xhat * m2.asDiagonal();
    return dx * coeff.asDiagonal();
}

Eigen::MatrixXd gate_forward(const AttentionBlock& attn, GateCache& cache) {
    cache.u = affine_forward(attn.reduce, cache.input);
    cache.su = silu(cache.u);
    const Eigen::MatrixXd v = affine_forward(attn.expand, cache.su);
    cache.gate = (1.0 / (1.0 + (-v.array()).exp())).matrix();
    return cache.input.cwiseProduct(cache.gate);
}

Eigen::MatrixXd gate_backward(const AttentionBlock& attn, AttentionBlock& grad,
                              const GateCache& cache, const Eigen::MatrixXd& dout) {
    Eigen::MatrixXd dinput = dout.cwiseProduct(cache.gate);
    const Eigen::MatrixXd dgate = dout.cwiseProduct(cache.input);
    const Eigen::MatrixXd dv =
        (dgate.array() * cache.gate.array() * (1.0 - cache.gate.array())).matrix();
    grad.expand.W = dv.transpose() * cache.su;
    grad.expand.b = dv.colwise().sum().transpose();
    const Eigen::MatrixXd dsu = dv * attn.expand.W;
    const Eigen::MatrixXd du = dsu.cwiseProduct(silu_grad(cache.u));
    grad.reduce.W = du.transpose() * cache.input;
    grad.reduce.b = du.colwise().sum().transpose();
    dinput += du * attn.reduce.W;
    return dinput;
}

}  // namespace

ModelParams init_model(std::uint64_t seed) {
    ModelParams p = make_shapes(1.0, 1.0);
    Rng rng(seed);
    for (GroupEncoder& enc : p.encoders) {
        init_affine(enc.proj, rng);
        init_affine(enc.lin1, rng);
        init_affine(enc.lin2, rng);
    }
    for (AttentionBlock& attn : p.scale_attention) {
        init_affine(attn.reduce, rng);
        init_affine(attn.expand, rng);
    }
    init_affine(p.global_attention.reduce, rng);
    init_affine(p.global_attention.expand, rng);
    init_affine(p.head_hidden, rng);
    init_affine(p.head_out, rng);
    return p;
}

ModelParams zeros_like(const ModelParams&) { return make_shapes(0.0, 0.0); }

Eigen::VectorXd forward(ModelParams& params, const Eigen::MatrixXd& inputs, RunMode mode,
                        ForwardCache* cache) {
    if (static_cast<std::size_t>(inputs.cols()) != kDiffDims) {
        throw Error(ErrorCode::ShapeError,
                    "model expects " + std::to_string(kDiffDims) + "-dim inputs, got " +
                        std::to_string(inputs.cols()));
    }
    const Eigen::Index batch = inputs.rows();
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.mode = mode;

    std::array<Eigen::MatrixXd, kGroupCount> group_out;
    for (std::size_t g = 0; g < kGroupCount; ++g) {
        const Eigen::MatrixXd xg =
            inputs.middleCols(static_cast<Eigen::Index>(g * kCoeffCount),
                              static_cast<Eigen::Index>(kCoeffCount));
        GroupEncoder& enc = params.encoders[g];
        GroupCache& gc = c.groups[g];

        gc.p = affine_forward(enc.proj, xg);
        gc.h0 = silu(gc.p);
        const Eigen::MatrixXd a1 = affine_forward(enc.lin1, gc.h0);
        gc.n1 = bn_forward(enc.bn1, a1, mode, gc.bn1);
        gc.z1 = silu(gc.n1);
        const Eigen::MatrixXd a2 = affine_forward(enc.lin2, gc.z1);
        const Eigen::MatrixXd n2 = bn_forward(enc.bn2, a2, mode, gc.bn2);
        gc.r = gc.h0 + n2;
        group_out[g] = silu(gc.r);
    }

    std::array<Eigen::MatrixXd, 3> scale_out;
    for (std::size_t s = 0; s < 3; ++s) {
        GateCache& sc = c.scales[s];
        sc.input.resize(batch, static_cast<Eigen::Index>(kScaleWidth));
        sc.input << group_out[3 * s], group_out[3 * s + 1], group_out[3 * s + 2];
        scale_out[s] = gate_forward(params.scale_attention[s], sc);
    }

    c.global.input.resize(batch, static_cast<Eigen::Index>(kGlobalWidth));
    c.global.input << scale_out[0], scale_out[1], scale_out[2];
    c.head_in = gate_forward(params.global_attention, c.global);

    c.h1 = affine_forward(params.head_hidden, c.head_in);
    c.sh = silu(c.h1);
    const Eigen::MatrixXd out = affine_forward(params.head_out, c.sh);
    return out.col(0);
}

Eigen::VectorXd forward_eval(const ModelParams& params, const Eigen::MatrixXd& inputs) {
    // Eval mode never mutates the parameters (running stats are read-only).
    return forward(const_cast<ModelParams&>(params), inputs, RunMode::Eval, nullptr);
}

LossBreakdown hybrid_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target,
                          double lambda1, double lambda2, double margin) {
    const Eigen::Index b = pred.size();
    if (b < 2 || target.size() != b) {
        throw Error(ErrorCode::InsufficientBatch, "loss needs at least 2 paired samples");
    }
    const double n = static_cast<double>(b);

    LossBreakdown loss;
    loss.mse = (pred - target).squaredNorm() / n;

    const Eigen::VectorXd cp = pred.array() - pred.mean();
    const Eigen::VectorXd ct = target.array() - target.mean();
    const double var_p = cp.squaredNorm() / n;
    const double var_t = ct.squaredNorm() / n;
    if (var_p < 1e-8 || var_t < 1e-8) {
        loss.plcc_loss = 1.0;
    } else {
        loss.plcc_loss = 1.0 - cp.dot(ct) / std::sqrt(cp.squaredNorm() * ct.squaredNorm());
    }

    std::size_t pairs = 0;
    double hinge_sum = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
        for (Eigen::Index j = 0; j < b; ++j) {
            if (target(i) > target(j)) {
                ++pairs;
                hinge_sum += std::max(0.0, margin - (pred(i) - pred(j)));
            }
        }
    }
    loss.rank_loss = pairs > 0 ? hinge_sum / static_cast<double>(pairs) : 0.0;

    loss.total = loss.mse + lambda1 * loss.plcc_loss + lambda2 * loss.rank_loss;
    return loss;
}

Eigen::VectorXd hybrid_loss_grad(const Eigen::VectorXd& pred, const Eigen::VectorXd& target,
                                 double lambda1, double lambda2, double margin) {
    const Eigen::Index b = pred.size();
    if (b < 2 || target.size() != b) {
        throw Error(ErrorCode::InsufficientBatch, "loss needs at least 2 paired samples");
    }
    const double n = static_cast<double>(b);

    Eigen::VectorXd grad = 2.0 / n * (pred - target);

    const Eigen::VectorXd cp = pred.array() - pred.mean();
    const Eigen::VectorXd ct = target.array() - target.mean();
    const double sxx = cp.squaredNorm();
    const double syy = ct.squaredNorm();
    if (sxx / n >= 1e-8 && syy / n >= 1e-8) {
        const double sxy = cp.dot(ct);
        const double denom = std::sqrt(sxx * syy);
        // d(1 - r)/dpred with r = sxy / sqrt(sxx*syy).
        grad -= lambda1 * (ct / denom - (sxy / (sxx * denom)) * cp);
    }

    std::size_t pairs = 0;
    for (Eigen::Index i = 0; i < b; ++i) {
        for (Eigen::Index j = 0; j < b; ++j) {
            if (target(i) > target(j)) ++pairs;
        }
    }
    if (pairs > 0) {
        const double w = lambda2 / static_cast<double>(pairs);
        for (Eigen::Index i = 0; i < b; ++i) {
            for (Eigen::Index j = 0; j < b; ++j) {
                if (target(i) > target(j) && margin - (pred(i) - pred(j)) > 0.0) {
                    grad(i) -= w;
                    grad(j) += w;
                }
            }
        }
    }
    return grad;
}

ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                     const Eigen::MatrixXd& inputs, const Eigen::VectorXd& dpred) {
    ModelParams grads = zeros_like(params);

    const Eigen::MatrixXd dout = dpred;  // B x 1
    grads.head_out.W = dout.transpose() * cache.sh;
    grads.head_out.b = dout.colwise().sum().transpose();
    const Eigen::MatrixXd dsh = dout * params.head_out.W;
    const Eigen::MatrixXd dh1 = dsh.cwiseProduct(silu_grad(cache.h1));
    grads.head_hidden.W = dh1.transpose() * cache.head_in;
    grads.head_hidden.b = dh1.colwise().sum().transpose();
    const Eigen::MatrixXd dhead_in = dh1 * params.head_hidden.W;

    const Eigen::MatrixXd dglobal =
        gate_backward(params.global_attention, grads.global_attention, cache.global, dhead_in);

    for (std::size_t s = 0; s < 3; ++s) {
        const Eigen::MatrixXd dscale_out =
            dglobal.middleCols(static_cast<Eigen::Index>(s * kScaleWidth),
                               static_cast<Eigen::Index>(kScaleWidth));
        const Eigen::MatrixXd dconcat = gate_backward(
            params.scale_attention[s], grads.scale_attention[s], cache.scales[s], dscale_out);

        for (std::size_t k = 0; k < 3; ++k) {
            const std::size_t g = 3 * s + k;
            const Eigen::MatrixXd de =
                dconcat.middleCols(static_cast<Eigen::Index>(k * kGroupWidth),
                                   static_cast<Eigen::Index>(kGroupWidth));
            const GroupEncoder& enc = params.encoders[g];
            GroupEncoder& genc = grads.encoders[g];
            const GroupCache& gc = cache.groups[g];
            const Eigen::MatrixXd xg =
                inputs.middleCols(static_cast<Eigen::Index>(g * kCoeffCount),
                                  static_cast<Eigen::Index>(kCoeffCount));

            const Eigen::MatrixXd dr = de.cwiseProduct(silu_grad(gc.r));
            const Eigen::MatrixXd da2 = bn_backward(enc.bn2, genc.bn2, gc.bn2, dr);
            genc.lin2.W = da2.transpose() * gc.z1;
            genc.lin2.b = da2.colwise().sum().transpose();
            const Eigen::MatrixXd dz1 = da2 * enc.lin2.W;
            const Eigen::MatrixXd dn1 = dz1.cwiseProduct(silu_grad(gc.n1));
            const Eigen::MatrixXd da1 = bn_backward(enc.bn1, genc.bn1, gc.bn1, dn1);
            genc.lin1.W = da1.transpose() * gc.h0;
            genc.lin1.b = da1.colwise().sum().transpose();
            const Eigen::MatrixXd dh0 = da1 * enc.lin1.W + dr;
            const Eigen::MatrixXd dp = dh0.cwiseProduct(silu_grad(gc.p));
            genc.proj.W = dp.transpose() * xg;
            genc.proj.b = dp.colwise().sum().transpose();
        }
    }
    return grads;
}

void adamw_step(ModelParams& params, const ModelParams& grads, AdamWState& state, double lr,
                double weight_decay) {
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
    const double bc2 = 1.0 - std::pow(kAdamBeta2, t);

    const auto pt = collect_tensors(params, false);
    const auto gt = collect_tensors(const_cast<ModelParams&>(grads), false);
    const auto mt = collect_tensors(state.m, false);
    const auto vt = collect_tensors(state.v, false);

    for (std::size_t k = 0; k < pt.size(); ++k) {
        double* p = pt[k].data;
        const double* g = gt[k].data;
        double* m = mt[k].data;
        double* v = vt[k].data;
        const double decay = pt[k].decay ? 1.0 - lr * weight_decay : 1.0;
        for (std::size_t i = 0; i < pt[k].size; ++i) {
            p[i] *= decay;
            m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
            v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
            p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kAdamEps);
        }
    }
}

double cosine_lr(std::size_t epoch, const TrainConfig& config) {
    if (config.epochs <= 1) return config.lr0;
    const double phase = static_cast<double>(epoch) / static_cast<double>(config.epochs - 1);
    return config.lr_min +
           0.5 * (config.lr0 - config.lr_min) * (1.0 + std::cos(std::numbers::pi * phase));
}

TrainResult train(const std::vector<FeatureDiffVector>& rows, const std::vector<double>& targets,
                  const TrainConfig& config) {
    if (rows.size() != targets.size()) {
        throw Error(ErrorCode::ShapeError, "row/target count mismatch");
    }
    if (rows.size() < 4) {
        throw Error(ErrorCode::InsufficientData, "training needs at least 4 rows");
    }
    for (double t : targets) {
        if (!std::isfinite(t)) {
            throw Error(ErrorCode::DegenerateTarget, "non-finite training target");
        }
    }

    TrainResult result;
    result.stats = fit_zscore(rows);

    const std::size_t n = rows.size();
    Eigen::MatrixXd inputs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kDiffDims));
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double> x = apply_preprocess(rows[i], result.stats);
        for (std::size_t d = 0; d < kDiffDims; ++d) {
            inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = x[d];
        }
    }

    result.model = init_model(derive_seed(config.seed, "init"));
    AdamWState state{zeros_like(result.model), zeros_like(result.model), 0};

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, config);
        Rng shuffle_rng(derive_seed(config.seed, "shuffle", epoch));
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        shuffle_rng.shuffle(order);

        LossBreakdown epoch_loss;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t bsz = std::min(config.batch_size, n - start);
            if (bsz < 2) continue;  // a trailing singleton has no pair structure

            Eigen::MatrixXd bx(static_cast<Eigen::Index>(bsz),
                               static_cast<Eigen::Index>(kDiffDims));
            Eigen::VectorXd bt(static_cast<Eigen::Index>(bsz));
            for (std::size_t i = 0; i < bsz; ++i) {
                bx.row(static_cast<Eigen::Index>(i)) =
                    inputs.row(static_cast<Eigen::Index>(order[start + i]));
                bt(static_cast<Eigen::Index>(i)) = targets[order[start + i]];
            }

            ForwardCache cache;
            const Eigen::VectorXd pred = forward(result.model, bx, RunMode::Train, &cache);
            const LossBreakdown loss =
                hybrid_loss(pred, bt, config.lambda1, config.lambda2, config.margin);
            const Eigen::VectorXd dpred =
                hybrid_loss_grad(pred, bt, config.lambda1, config.lambda2, config.margin);
            const ModelParams grads = backward(result.model, cache, bx, dpred);
            adamw_step(result.model, grads, state, lr, config.weight_decay);

            epoch_loss.mse += loss.mse;
            epoch_loss.plcc_loss += loss.plcc_loss;
            epoch_loss.rank_loss += loss.rank_loss;
            ++steps;
        }

        if (steps > 0) {
            epoch_loss.mse /= static_cast<double>(steps);
            epoch_loss.plcc_loss /= static_cast<double>(steps);
            epoch_loss.rank_loss /= static_cast<double>(steps);
        }
        epoch_loss.total = epoch_loss.mse + config.lambda1 * epoch_loss.plcc_loss +
                           config.lambda2 * epoch_loss.rank_loss;
        result.history.push_back({lr, epoch_loss});
    }

    result.model.stats_hash = preprocess_stats_hash(result.stats);
    return result;
}

double predict(const ModelParams& model, const PreprocessStats& stats,
               const FeatureDiffVector& v) {
    if (model.stats_hash != 0 && model.stats_hash != preprocess_stats_hash(stats)) {
        throw Error(ErrorCode::ModelStatsMismatch,
                    "preprocessing stats do not match the ones the model was trained with");
    }
    const std::vector<double> x = apply_preprocess(v, stats);
    Eigen::MatrixXd input(1, static_cast<Eigen::Index>(kDiffDims));
    for (std::size_t d = 0; d < kDiffDims; ++d) {
        input(0, static_cast<Eigen::Index>(d)) = x[d];
    }
    return forward_eval(model, input)(0);
}

namespace {

void append_bytes(std::string& buf, const void* data, std::size_t size) {
    buf.append(static_cast<const char*>(data), size);
}

template <typename T>
void append_value(std::string& buf, const T& v) {
    append_bytes(buf, &v, sizeof(T));
}

class ByteReader {
public:
    ByteReader(const char* data, std::size_t size) : data_(data), size_(size) {}

    template <typename T>
    T read() {
        if (pos_ + sizeof(T) > size_) {
            throw Error(ErrorCode::ChecksumError, "model file is truncated");
        }
        T v;
        std::memcpy(&v, data_ + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    void read_doubles(double* out, std::size_t count) {
        const std::size_t bytes = count * sizeof(double);
        if (pos_ + bytes > size_) {
            throw Error(ErrorCode::ChecksumError, "model file is truncated");
        }
        std::memcpy(out, data_ + pos_, bytes);
        pos_ += bytes;
    }

private:
    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_model(const ModelParams& model, const PreprocessStats& stats,
                const std::string& path) {
    std::string buf;
    append_value(buf, kModelMagic);
    append_value(buf, kModelVersion);

    const std::uint32_t dims[6] = {
        static_cast<std::uint32_t>(kDiffDims),   static_cast<std::uint32_t>(kGroupCount),
        static_cast<std::uint32_t>(kCoeffCount), static_cast<std::uint32_t>(kGroupWidth),
        static_cast<std::uint32_t>(kHeadWidth),  static_cast<std::uint32_t>(kAttentionRatio)};
    for (std::uint32_t d : dims) append_value(buf, d);

    const std::uint64_t stat_dims = stats.dims();
    append_value(buf, stat_dims);
    for (double m : stats.mean) append_value(buf, m);
    for (double s : stats.stddev) append_value(buf, s);

    auto tensors = collect_tensors(const_cast<ModelParams&>(model), true);
    for (const TensorRef& t : tensors) {
        append_bytes(buf, t.data, t.size * sizeof(double));
    }
    append_value(buf, model.stats_hash);

    const std::uint64_t checksum = fnv1a(buf.data(), buf.size());
    append_value(buf, checksum);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path);
}

LoadedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 16) throw Error(ErrorCode::ChecksumError, "model file is truncated");

    ByteReader reader(buf.data(), buf.size() - 8);
    const std::uint32_t magic = reader.read<std::uint32_t>();
    if (magic != kModelMagic) {
        throw Error(ErrorCode::ParseError, "not a model file");
    }
    const std::uint32_t version = reader.read<std::uint32_t>();
    if (version != kModelVersion) {
        throw Error(ErrorCode::UnsupportedVersion,
                    "model file version " + std::to_string(version) + ", expected " +
                        std::to_string(kModelVersion));
    }

    std::uint64_t stored_checksum;
    std::memcpy(&stored_checksum, buf.data() + buf.size() - 8, 8);
    if (stored_checksum != fnv1a(buf.data(), buf.size() - 8)) {
        throw Error(ErrorCode::ChecksumError, "model file checksum mismatch");
    }

    const std::uint32_t expect[6] = {
        static_cast<std::uint32_t>(kDiffDims),   static_cast<std::uint32_t>(kGroupCount),
        static_cast<std::uint32_t>(kCoeffCount), static_cast<std::uint32_t>(kGroupWidth),
        static_cast<std::uint32_t>(kHeadWidth),  static_cast<std::uint32_t>(kAttentionRatio)};
    for (std::uint32_t e : expect) {
        const std::uint32_t got = reader.read<std::uint32_t>();
        if (got != e) {
            throw Error(ErrorCode::ShapeError, "model file was built for different dimensions");
        }
    }

    LoadedModel loaded;
    const std::uint64_t stat_dims = reader.read<std::uint64_t>();
    if (stat_dims != kDiffDims) {
        throw Error(ErrorCode::ShapeError, "model file stats have unexpected dimensionality");
    }
    loaded.stats.mean.resize(stat_dims);
    loaded.stats.stddev.resize(stat_dims);
    reader.read_doubles(loaded.stats.mean.data(), stat_dims);
    reader.read_doubles(loaded.stats.stddev.data(), stat_dims);

    loaded.model = make_shapes(0.0, 0.0);
    auto tensors = collect_tensors(loaded.model, true);
    for (const TensorRef& t : tensors) {
        reader.read_doubles(t.data, t.size);
    }
    loaded.model.stats_hash = reader.read<std::uint64_t>();
    return loaded;
}

}  // namespace pcq
