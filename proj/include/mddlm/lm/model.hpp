#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mddlm/common.hpp"

namespace mddlm::lm {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct ModelConfig {
    int layers = 4;
    int heads = 4;
    int embed_dim = 128;
    int mlp_dim = 512;
    int context_len = 512;
    int vocab_size = 0;

    int head_dim() const { return embed_dim / heads; }
    void validate() const {
        if (layers < 1 || heads < 1 || embed_dim < 1 || mlp_dim < 1 || context_len < 1 ||
            vocab_size < 1)
            throw ConfigError("ModelConfig: all dimensions must be positive");
        if (embed_dim % heads != 0)
            throw ConfigError("ModelConfig: embed_dim must be divisible by heads");
    }
    bool operator==(const ModelConfig&) const = default;
};

constexpr double kNormEps = 1e-6;
constexpr double kInitStd = 0.02;

/// Matrix roles a LoRA delta can attach to. Weights are stored input-major
/// (d_in x d_out) and applied as y = x * W.
enum class TensorKind { Wq, Wk, Wv, Wo, W1, W2, WOut };

inline std::string to_string(TensorKind kind) {
    switch (kind) {
        case TensorKind::Wq: return "wq";
        case TensorKind::Wk: return "wk";
        case TensorKind::Wv: return "wv";
        case TensorKind::Wo: return "wo";
        case TensorKind::W1: return "w1";
        case TensorKind::W2: return "w2";
        case TensorKind::WOut: return "wout";
    }
    return "wq";
}

inline TensorKind tensor_kind_from_string(const std::string& s) {
    if (s == "wq") return TensorKind::Wq;
    if (s == "wk") return TensorKind::Wk;
    if (s == "wv") return TensorKind::Wv;
    if (s == "wo") return TensorKind::Wo;
    if (s == "w1") return TensorKind::W1;
    if (s == "w2") return TensorKind::W2;
    if (s == "wout") return TensorKind::WOut;
    throw ConfigError("unknown LoRA target: " + s);
}

template <typename Scalar>
struct ModelParams {
    ModelConfig config;
    Mat<Scalar> tok_emb;  // V x d
    Mat<Scalar> pos_emb;  // context x d
    struct Layer {
        Mat<Scalar> wq, wk, wv, wo;  // d x d
        Mat<Scalar> w1;              // d x m
        Mat<Scalar> w2;              // m x d
        Vec<Scalar> attn_gain, mlp_gain;
    };
    std::vector<Layer> layers;
    Vec<Scalar> final_gain;
    Mat<Scalar> w_out;  // d x V

    size_t param_count() const;
    size_t byte_size() const { return param_count() * sizeof(Scalar); }
};

/// Visits every parameter tensor as (name, Ref<Mat>). Gains visit as d x 1.
template <typename Scalar, typename F>
void for_each_tensor(ModelParams<Scalar>& p, F&& f) {
    f(std::string("tok_emb"), Eigen::Ref<Mat<Scalar>>(p.tok_emb));
    f(std::string("pos_emb"), Eigen::Ref<Mat<Scalar>>(p.pos_emb));
    for (size_t l = 0; l < p.layers.size(); ++l) {
        std::string prefix = "layers." + std::to_string(l) + ".";
        auto& layer = p.layers[l];
        f(prefix + "wq", Eigen::Ref<Mat<Scalar>>(layer.wq));
        f(prefix + "wk", Eigen::Ref<Mat<Scalar>>(layer.wk));
        f(prefix + "wv", Eigen::Ref<Mat<Scalar>>(layer.wv));
        f(prefix + "wo", Eigen::Ref<Mat<Scalar>>(layer.wo));
        f(prefix + "w1", Eigen::Ref<Mat<Scalar>>(layer.w1));
        f(prefix + "w2", Eigen::Ref<Mat<Scalar>>(layer.w2));
        f(prefix + "attn_gain", Eigen::Ref<Mat<Scalar>>(layer.attn_gain));
        f(prefix + "mlp_gain", Eigen::Ref<Mat<Scalar>>(layer.mlp_gain));
    }
    f(std::string("final_gain"), Eigen::Ref<Mat<Scalar>>(p.final_gain));
    f(std::string("w_out"), Eigen::Ref<Mat<Scalar>>(p.w_out));
}

template <typename Scalar, typename F>
void for_each_tensor(const ModelParams<Scalar>& p, F&& f) {
    for_each_tensor(const_cast<ModelParams<Scalar>&>(p),
                    [&](const std::string& name, Eigen::Ref<Mat<Scalar>> m) {
                        f(name, Eigen::Ref<const Mat<Scalar>>(m));
                    });
}

template <typename Scalar>
size_t ModelParams<Scalar>::param_count() const {
    size_t n = 0;
    for_each_tensor(*this, [&](const std::string&, Eigen::Ref<const Mat<Scalar>> m) {
        n += static_cast<size_t>(m.size());
    });
    return n;
}

namespace detail {
template <typename Scalar>
Mat<Scalar> gaussian(int rows, int cols, Rng& rng, double std_dev) {
    Mat<Scalar> m(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) m(r, c) = static_cast<Scalar>(rng.normal(0.0, std_dev));
    return m;
}
}  // namespace detail

template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& config, uint64_t seed) {
    config.validate();
    ModelParams<Scalar> p;
    p.config = config;
    auto fill = [&](const std::string& name, int rows, int cols) {
        Rng rng(derive_seed(seed, "init/" + name));
        return detail::gaussian<Scalar>(rows, cols, rng, kInitStd);
    };
    const int d = config.embed_dim, m = config.mlp_dim, v = config.vocab_size;
    p.tok_emb = fill("tok_emb", v, d);
    p.pos_emb = fill("pos_emb", config.context_len, d);
    p.layers.resize(static_cast<size_t>(config.layers));
    for (int l = 0; l < config.layers; ++l) {
        auto& layer = p.layers[static_cast<size_t>(l)];
        std::string prefix = "layers." + std::to_string(l) + ".";
        layer.wq = fill(prefix + "wq", d, d);
        layer.wk = fill(prefix + "wk", d, d);
        layer.wv = fill(prefix + "wv", d, d);
        layer.wo = fill(prefix + "wo", d, d);
        layer.w1 = fill(prefix + "w1", d, m);
        layer.w2 = fill(prefix + "w2", m, d);
        layer.attn_gain = Vec<Scalar>::Ones(d);
        layer.mlp_gain = Vec<Scalar>::Ones(d);
    }
    p.final_gain = Vec<Scalar>::Ones(d);
    p.w_out = fill("w_out", d, v);
    return p;
}

// ---------------------------------------------------------------------------
// LoRA
// ---------------------------------------------------------------------------

struct LoraConfig {
    int rank = 8;
    double alpha = 16.0;
    // Default per the method the rank/alpha convention comes from: attention
    // query and value projections.
    std::vector<std::string> targets{"wq", "wv"};
};

template <typename Scalar>
struct LoraAdapter {
    int rank = 0;
    double alpha = 0.0;
    struct Delta {
        int layer = -1;  // -1: a global tensor (wout)
        TensorKind kind = TensorKind::Wq;
        Mat<Scalar> a;  // r x d_in
        Mat<Scalar> b;  // d_out x r
        std::string name() const {
            std::string base = to_string(kind);
            return layer < 0 ? base : "layers." + std::to_string(layer) + "." + base;
        }
    };
    std::vector<Delta> deltas;

    Scalar scale() const { return static_cast<Scalar>(alpha / rank); }
    size_t trainable_params() const {
        size_t n = 0;
        for (const auto& d : deltas)
            n += static_cast<size_t>(d.a.size()) + static_cast<size_t>(d.b.size());
        return n;
    }
    size_t byte_size() const { return trainable_params() * sizeof(Scalar); }

    const Delta* find(int layer, TensorKind kind) const {
        for (const auto& d : deltas)
            if (d.layer == layer && d.kind == kind) return &d;
        return nullptr;
    }
};

/// Freezes the base and returns a trainable adapter: B = 0, A ~ N(0, 0.02^2)
/// seeded, so the adapted forward equals the base forward at init.
template <typename Scalar>
LoraAdapter<Scalar> lora_inject(const ModelParams<Scalar>& params, const LoraConfig& config,
                                uint64_t seed) {
    if (config.rank < 1) throw ConfigError("lora_inject: rank must be >= 1");
    if (config.alpha <= 0.0) throw ConfigError("lora_inject: alpha must be positive");
    if (config.targets.empty()) throw ConfigError("lora_inject: no targets");
    LoraAdapter<Scalar> adapter;
    adapter.rank = config.rank;
    adapter.alpha = config.alpha;
    const ModelConfig& mc = params.config;
    auto add = [&](int layer, TensorKind kind, int d_in, int d_out) {
        typename LoraAdapter<Scalar>::Delta delta;
        delta.layer = layer;
        delta.kind = kind;
        Rng rng(derive_seed(seed, "lora/" +
                                      (layer < 0 ? to_string(kind)
                                                 : std::to_string(layer) + "/" + to_string(kind))));
        delta.a = detail::gaussian<Scalar>(config.rank, d_in, rng, kInitStd);
        delta.b = Mat<Scalar>::Zero(d_out, config.rank);
        adapter.deltas.push_back(std::move(delta));
    };
    for (const auto& target : config.targets) {
        TensorKind kind = tensor_kind_from_string(target);  // throws on unknown
        switch (kind) {
            case TensorKind::Wq:
            case TensorKind::Wk:
            case TensorKind::Wv:
            case TensorKind::Wo:
                for (int l = 0; l < mc.layers; ++l) add(l, kind, mc.embed_dim, mc.embed_dim);
                break;
            case TensorKind::W1:
                for (int l = 0; l < mc.layers; ++l) add(l, kind, mc.embed_dim, mc.mlp_dim);
                break;
            case TensorKind::W2:
                for (int l = 0; l < mc.layers; ++l) add(l, kind, mc.mlp_dim, mc.embed_dim);
                break;
            case TensorKind::WOut: add(-1, kind, mc.embed_dim, mc.vocab_size); break;
        }
    }
    return adapter;
}

/// W' = W + (alpha/r) * (B A)^T per target (input-major storage). Merging an
/// already-merged model adds the delta again.
template <typename Scalar>
ModelParams<Scalar> lora_merge(const ModelParams<Scalar>& params,
                               const LoraAdapter<Scalar>& adapter) {
    ModelParams<Scalar> merged = params;
    for (const auto& delta : adapter.deltas) {
        Mat<Scalar>* w = nullptr;
        if (delta.layer >= 0) {
            if (delta.layer >= static_cast<int>(merged.layers.size()))
                throw ConfigError("lora_merge: layer out of range");
            auto& layer = merged.layers[static_cast<size_t>(delta.layer)];
            switch (delta.kind) {
                case TensorKind::Wq: w = &layer.wq; break;
                case TensorKind::Wk: w = &layer.wk; break;
                case TensorKind::Wv: w = &layer.wv; break;
                case TensorKind::Wo: w = &layer.wo; break;
                case TensorKind::W1: w = &layer.w1; break;
                case TensorKind::W2: w = &layer.w2; break;
                case TensorKind::WOut: break;
            }
        } else if (delta.kind == TensorKind::WOut) {
            w = &merged.w_out;
        }
        if (!w) throw ConfigError("lora_merge: bad delta placement");
        if (w->rows() != delta.a.cols() || w->cols() != delta.b.rows())
            throw ConfigError("lora_merge: shape mismatch on " + delta.name());
        w->noalias() += adapter.scale() * (delta.a.transpose() * delta.b.transpose());
    }
    return merged;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ForwardCache {
    std::vector<int> ids;
    Mat<Scalar> x0;
    struct LayerCache {
        Mat<Scalar> x_in;
        Mat<Scalar> attn_normed;
        Vec<Scalar> attn_inv;
        Mat<Scalar> q, k, v;
        std::vector<Mat<Scalar>> probs;  // per head, T x T
        Mat<Scalar> ctx;                 // heads concatenated, before wo
        Mat<Scalar> mlp_in;
        Mat<Scalar> mlp_normed;
        Vec<Scalar> mlp_inv;
        Mat<Scalar> z;  // pre-activation
        Mat<Scalar> h;  // silu(z)
    };
    std::vector<LayerCache> layers;
    Mat<Scalar> x_final;
    Mat<Scalar> final_normed;
    Vec<Scalar> final_inv;
};

namespace detail {

/// y = x W plus the adapter branch when a delta is attached.
template <typename Scalar>
Mat<Scalar> project(const Mat<Scalar>& x, const Mat<Scalar>& w,
                    const typename LoraAdapter<Scalar>::Delta* delta, Scalar scale) {
    Mat<Scalar> y = x * w;
    if (delta) y.noalias() += scale * ((x * delta->a.transpose()) * delta->b.transpose());
    return y;
}

template <typename Scalar>
Mat<Scalar> rmsnorm(const Mat<Scalar>& x, const Vec<Scalar>& gain, Vec<Scalar>& inv_out) {
    const auto rows = x.rows();
    inv_out.resize(rows);
    Mat<Scalar> y(rows, x.cols());
    for (Eigen::Index t = 0; t < rows; ++t) {
        Scalar ms = x.row(t).squaredNorm() / static_cast<Scalar>(x.cols());
        Scalar inv = Scalar(1) / std::sqrt(ms + static_cast<Scalar>(kNormEps));
        inv_out(t) = inv;
        y.row(t) = (x.row(t) * inv).cwiseProduct(gain.transpose());
    }
    return y;
}

template <typename Scalar>
Scalar sigmoid_s(Scalar x) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
}

}  // namespace detail

/// Causal decoder forward: logits (T x V) for a token-id sequence. Pass a
/// cache to retain the activations backward() needs.
template <typename Scalar>
Mat<Scalar> forward(const ModelParams<Scalar>& params, const LoraAdapter<Scalar>* adapter,
                    const std::vector<int>& ids, ForwardCache<Scalar>* cache = nullptr) {
    const ModelConfig& mc = params.config;
    const int T = static_cast<int>(ids.size());
    if (T == 0) throw DataError("forward: empty sequence");
    if (T > mc.context_len)
        throw DataError("forward: sequence length " + std::to_string(T) + " exceeds context " +
                        std::to_string(mc.context_len));
    for (int id : ids)
        if (id < 0 || id >= mc.vocab_size) throw DataError("forward: token id out of range");

    const int d = mc.embed_dim, H = mc.heads, dh = mc.head_dim();
    const Scalar scale = adapter ? adapter->scale() : Scalar(0);
    const Scalar inv_sqrt_dh = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

    Mat<Scalar> x(T, d);
    for (int t = 0; t < T; ++t)
        x.row(t) = params.tok_emb.row(ids[t]) + params.pos_emb.row(t);
    if (cache) {
        cache->ids = ids;
        cache->x0 = x;
        cache->layers.assign(params.layers.size(), {});
    }

    for (size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        auto* lc = cache ? &cache->layers[l] : nullptr;
        if (lc) lc->x_in = x;

        Vec<Scalar> attn_inv;
        Mat<Scalar> normed = detail::rmsnorm(x, layer.attn_gain, attn_inv);
        const int li = static_cast<int>(l);
        Mat<Scalar> q = detail::project<Scalar>(
            normed, layer.wq, adapter ? adapter->find(li, TensorKind::Wq) : nullptr, scale);
        Mat<Scalar> k = detail::project<Scalar>(
            normed, layer.wk, adapter ? adapter->find(li, TensorKind::Wk) : nullptr, scale);
        Mat<Scalar> v = detail::project<Scalar>(
            normed, layer.wv, adapter ? adapter->find(li, TensorKind::Wv) : nullptr, scale);

        Mat<Scalar> ctx(T, d);
        std::vector<Mat<Scalar>> head_probs;
        if (lc) head_probs.reserve(static_cast<size_t>(H));
        for (int h = 0; h < H; ++h) {
            auto qh = q.middleCols(h * dh, dh);
            auto kh = k.middleCols(h * dh, dh);
            auto vh = v.middleCols(h * dh, dh);
            Mat<Scalar> scores = (qh * kh.transpose()) * inv_sqrt_dh;
            Mat<Scalar> probs(T, T);
            for (int t = 0; t < T; ++t) {
                auto row = scores.row(t).head(t + 1);
                Scalar max_v = row.maxCoeff();
                Vec<Scalar> e = (row.array() - max_v).exp().matrix().transpose();
                Scalar sum = e.sum();
                probs.row(t).head(t + 1) = (e / sum).transpose();
                if (t + 1 < T) probs.row(t).tail(T - t - 1).setZero();
            }
            ctx.middleCols(h * dh, dh).noalias() = probs * vh;
            if (lc) head_probs.push_back(std::move(probs));
        }
        Mat<Scalar> attn_out = detail::project<Scalar>(
            ctx, layer.wo, adapter ? adapter->find(li, TensorKind::Wo) : nullptr, scale);
        x += attn_out;

        if (lc) {
            lc->attn_normed = normed;
            lc->attn_inv = attn_inv;
            lc->q = q;
            lc->k = k;
            lc->v = v;
            lc->probs = std::move(head_probs);
            lc->ctx = ctx;
            lc->mlp_in = x;
        }

        Vec<Scalar> mlp_inv;
        Mat<Scalar> mlp_normed = detail::rmsnorm(x, layer.mlp_gain, mlp_inv);
        Mat<Scalar> z = detail::project<Scalar>(
            mlp_normed, layer.w1, adapter ? adapter->find(li, TensorKind::W1) : nullptr, scale);
        Mat<Scalar> h_act =
            z.unaryExpr([](Scalar s) { return s * detail::sigmoid_s(s); });
        Mat<Scalar> mlp_out = detail::project<Scalar>(
            h_act, layer.w2, adapter ? adapter->find(li, TensorKind::W2) : nullptr, scale);
        x += mlp_out;

        if (lc) {
            lc->mlp_normed = mlp_normed;
            lc->mlp_inv = mlp_inv;
            lc->z = z;
            lc->h = h_act;
        }
    }

    if (cache) cache->x_final = x;
    Vec<Scalar> final_inv;
    Mat<Scalar> final_normed = detail::rmsnorm(x, params.final_gain, final_inv);
    Mat<Scalar> logits = detail::project<Scalar>(
        final_normed, params.w_out, adapter ? adapter->find(-1, TensorKind::WOut) : nullptr,
        scale);
    if (cache) {
        cache->final_normed = final_normed;
        cache->final_inv = final_inv;
    }
    if (!logits.allFinite()) throw DataError("forward: non-finite logits");
    return logits;
}

}  // namespace mddlm::lm
