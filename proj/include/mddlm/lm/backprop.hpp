#pragma once

#include "mddlm/lm/model.hpp"

namespace mddlm::lm {

/// Mean negative log-likelihood over unmasked target positions. An empty
/// mask means every position counts.
template <typename Scalar>
Scalar lm_loss(const Mat<Scalar>& logits, const std::vector<int>& targets,
               const std::vector<uint8_t>& mask = {});

/// Sum-form loss with gradient: returns (sum NLL over unmasked positions,
/// dlogits scaled by 1/denom). Batch-level means divide by the batch's total
/// unmasked count.
template <typename Scalar>
std::pair<Scalar, Mat<Scalar>> lm_loss_sum_grad(const Mat<Scalar>& logits,
                                                const std::vector<int>& targets,
                                                const std::vector<uint8_t>& mask, double denom);

template <typename Scalar>
struct Gradients {
    std::optional<ModelParams<Scalar>> base;     // engaged when no adapter is attached
    std::optional<LoraAdapter<Scalar>> adapter;  // engaged when an adapter is attached

    /// Global L2 norm over all engaged gradient tensors.
    double norm() const;
    void check_finite() const;  // throws naming the offending tensor
};

template <typename Scalar>
Gradients<Scalar> make_zero_gradients(const ModelParams<Scalar>& params,
                                      const LoraAdapter<Scalar>* adapter);

/// Reverse-mode gradients for the cached forward pass. With an adapter
/// attached only adapter tensors receive gradients (base frozen); otherwise
/// every base tensor does.
template <typename Scalar>
void backward_accumulate(const ModelParams<Scalar>& params, const LoraAdapter<Scalar>* adapter,
                         const ForwardCache<Scalar>& cache, const Mat<Scalar>& dlogits,
                         Gradients<Scalar>& grads);

template <typename Scalar>
Gradients<Scalar> backward(const ModelParams<Scalar>& params, const LoraAdapter<Scalar>* adapter,
                           const ForwardCache<Scalar>& cache, const Mat<Scalar>& dlogits) {
    Gradients<Scalar> grads = make_zero_gradients(params, adapter);
    backward_accumulate(params, adapter, cache, dlogits, grads);
    grads.check_finite();
    return grads;
}

// ---------------------------------------------------------------------------
// Implementation
// ---------------------------------------------------------------------------

namespace detail {

template <typename Scalar>
void check_loss_shapes(const Mat<Scalar>& logits, const std::vector<int>& targets,
                       const std::vector<uint8_t>& mask) {
    if (static_cast<size_t>(logits.rows()) != targets.size())
        throw DataError("lm_loss: logits/targets length mismatch");
    if (!mask.empty() && mask.size() != targets.size())
        throw DataError("lm_loss: mask length mismatch");
    for (size_t t = 0; t < targets.size(); ++t)
        if (targets[t] < 0 || targets[t] >= logits.cols())
            throw DataError("lm_loss: target id out of range at position " + std::to_string(t));
}

template <typename Scalar>
Scalar row_logsumexp(const Eigen::Ref<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>& row) {
    Scalar m = row.maxCoeff();
    return m + std::log((row.array() - m).exp().sum());
}

}  // namespace detail

template <typename Scalar>
Scalar lm_loss(const Mat<Scalar>& logits, const std::vector<int>& targets,
               const std::vector<uint8_t>& mask) {
    detail::check_loss_shapes(logits, targets, mask);
    Scalar sum = 0;
    size_t count = 0;
    for (Eigen::Index t = 0; t < logits.rows(); ++t) {
        if (!mask.empty() && !mask[static_cast<size_t>(t)]) continue;
        sum += detail::row_logsumexp<Scalar>(logits.row(t)) -
               logits(t, targets[static_cast<size_t>(t)]);
        ++count;
    }
    if (count == 0) throw DataError("lm_loss: every position is masked out");
    return sum / static_cast<Scalar>(count);
}

template <typename Scalar>
std::pair<Scalar, Mat<Scalar>> lm_loss_sum_grad(const Mat<Scalar>& logits,
                                                const std::vector<int>& targets,
                                                const std::vector<uint8_t>& mask, double denom) {
    detail::check_loss_shapes(logits, targets, mask);
    Mat<Scalar> dlogits = Mat<Scalar>::Zero(logits.rows(), logits.cols());
    Scalar sum = 0;
    size_t count = 0;
    const Scalar w = static_cast<Scalar>(1.0 / denom);
    for (Eigen::Index t = 0; t < logits.rows(); ++t) {
        if (!mask.empty() && !mask[static_cast<size_t>(t)]) continue;
        Scalar lse = detail::row_logsumexp<Scalar>(logits.row(t));
        int target = targets[static_cast<size_t>(t)];
        sum += lse - logits(t, target);
        dlogits.row(t) = (logits.row(t).array() - lse).exp().matrix() * w;
        dlogits(t, target) -= w;
        ++count;
    }
    if (count == 0) throw DataError("lm_loss: every position is masked out");
    return {sum, std::move(dlogits)};
}

template <typename Scalar>
double Gradients<Scalar>::norm() const {
    double sq = 0;
    if (base)
        for_each_tensor(*base, [&](const std::string&, Eigen::Ref<const Mat<Scalar>> m) {
            sq += static_cast<double>(m.squaredNorm());
        });
    if (adapter)
        for (const auto& d : adapter->deltas)
            sq += static_cast<double>(d.a.squaredNorm()) + static_cast<double>(d.b.squaredNorm());
    return std::sqrt(sq);
}

template <typename Scalar>
void Gradients<Scalar>::check_finite() const {
    if (base)
        for_each_tensor(*base, [&](const std::string& name, Eigen::Ref<const Mat<Scalar>> m) {
            if (!m.allFinite()) throw DataError("non-finite gradient in " + name);
        });
    if (adapter)
        for (const auto& d : adapter->deltas) {
            if (!d.a.allFinite()) throw DataError("non-finite gradient in " + d.name() + ".a");
            if (!d.b.allFinite()) throw DataError("non-finite gradient in " + d.name() + ".b");
        }
}

template <typename Scalar>
Gradients<Scalar> make_zero_gradients(const ModelParams<Scalar>& params,
                                      const LoraAdapter<Scalar>* adapter) {
    Gradients<Scalar> g;
    if (adapter) {
        LoraAdapter<Scalar> zero = *adapter;
        for (auto& d : zero.deltas) {
            d.a.setZero();
            d.b.setZero();
        }
        g.adapter = std::move(zero);
    } else {
        ModelParams<Scalar> zero = params;
        for_each_tensor(zero,
                        [](const std::string&, Eigen::Ref<Mat<Scalar>> m) { m.setZero(); });
        g.base = std::move(zero);
    }
    return g;
}

namespace detail {

/// Backward of y = x W (+ adapter branch). Accumulates dW / dA / dB into the
/// gradient holders when present and returns dx.
template <typename Scalar>
Mat<Scalar> project_backward(const Mat<Scalar>& x, const Mat<Scalar>& w,
                             const typename LoraAdapter<Scalar>::Delta* delta, Scalar scale,
                             const Mat<Scalar>& dy, Mat<Scalar>* dw,
                             typename LoraAdapter<Scalar>::Delta* dgrad) {
    Mat<Scalar> dx = dy * w.transpose();
    if (dw) dw->noalias() += x.transpose() * dy;
    if (delta) {
        Mat<Scalar> u = x * delta->a.transpose();  // T x r
        Mat<Scalar> du = scale * (dy * delta->b);  // T x r
        if (dgrad) {
            dgrad->b.noalias() += scale * (dy.transpose() * u);
            dgrad->a.noalias() += du.transpose() * x;
        }
        dx.noalias() += du * delta->a;
    }
    return dx;
}

/// Backward of rmsnorm given the cached inverse RMS per row.
template <typename Scalar>
Mat<Scalar> rmsnorm_backward(const Mat<Scalar>& x, const Vec<Scalar>& gain,
                             const Vec<Scalar>& inv, const Mat<Scalar>& dy, Vec<Scalar>* dgain) {
    const Eigen::Index T = x.rows(), d = x.cols();
    Mat<Scalar> dx(T, d);
    for (Eigen::Index t = 0; t < T; ++t) {
        auto xt = x.row(t);
        auto dyt = dy.row(t);
        Scalar inv_t = inv(t);
        if (dgain) dgain->noalias() += (dyt.cwiseProduct(xt) * inv_t).transpose();
        auto dyg = dyt.cwiseProduct(gain.transpose());
        Scalar dot = dyg.cwiseProduct(xt).sum();
        dx.row(t) = dyg * inv_t -
                    xt * (dot * inv_t * inv_t * inv_t / static_cast<Scalar>(d));
    }
    return dx;
}

}  // namespace detail

template <typename Scalar>
void backward_accumulate(const ModelParams<Scalar>& params, const LoraAdapter<Scalar>* adapter,
                         const ForwardCache<Scalar>& cache, const Mat<Scalar>& dlogits,
                         Gradients<Scalar>& grads) {
    const ModelConfig& mc = params.config;
    const int T = static_cast<int>(cache.ids.size());
    const int d = mc.embed_dim, H = mc.heads, dh = mc.head_dim();
    const Scalar scale = adapter ? adapter->scale() : Scalar(0);
    const Scalar inv_sqrt_dh = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

    ModelParams<Scalar>* gb = grads.base ? &*grads.base : nullptr;
    auto adapter_grad = [&](int layer, TensorKind kind) ->
        typename LoraAdapter<Scalar>::Delta* {
            if (!grads.adapter) return nullptr;
            for (auto& dd : grads.adapter->deltas)
                if (dd.layer == layer && dd.kind == kind) return &dd;
            return nullptr;
        };

    // Output head and final norm.
    Mat<Scalar> dnormed = detail::project_backward<Scalar>(
        cache.final_normed, params.w_out, adapter ? adapter->find(-1, TensorKind::WOut) : nullptr,
        scale, dlogits, gb ? &gb->w_out : nullptr, adapter_grad(-1, TensorKind::WOut));
    Mat<Scalar> dx = detail::rmsnorm_backward(cache.x_final, params.final_gain, cache.final_inv,
                                              dnormed, gb ? &gb->final_gain : nullptr);

    for (int l = static_cast<int>(params.layers.size()) - 1; l >= 0; --l) {
        const auto& layer = params.layers[static_cast<size_t>(l)];
        const auto& lc = cache.layers[static_cast<size_t>(l)];
        auto* glayer = gb ? &gb->layers[static_cast<size_t>(l)] : nullptr;

        // MLP block: x_out = mlp_in + silu(norm(mlp_in) W1) W2
        Mat<Scalar> dh_act = detail::project_backward<Scalar>(
            lc.h, layer.w2, adapter ? adapter->find(l, TensorKind::W2) : nullptr, scale, dx,
            glayer ? &glayer->w2 : nullptr, adapter_grad(l, TensorKind::W2));
        Mat<Scalar> dz = dh_act.cwiseProduct(lc.z.unaryExpr([](Scalar s) {
            Scalar sig = detail::sigmoid_s(s);
            return sig * (Scalar(1) + s * (Scalar(1) - sig));
        }));
        Mat<Scalar> dmlp_normed = detail::project_backward<Scalar>(
            lc.mlp_normed, layer.w1, adapter ? adapter->find(l, TensorKind::W1) : nullptr, scale,
            dz, glayer ? &glayer->w1 : nullptr, adapter_grad(l, TensorKind::W1));
        dx += detail::rmsnorm_backward(lc.mlp_in, layer.mlp_gain, lc.mlp_inv, dmlp_normed,
                                       glayer ? &glayer->mlp_gain : nullptr);

        // Attention block: mlp_in = x_in + (softmax(q k^T) v) Wo
        Mat<Scalar> dctx = detail::project_backward<Scalar>(
            lc.ctx, layer.wo, adapter ? adapter->find(l, TensorKind::Wo) : nullptr, scale, dx,
            glayer ? &glayer->wo : nullptr, adapter_grad(l, TensorKind::Wo));

        Mat<Scalar> dq(T, d), dk(T, d), dv(T, d);
        for (int h = 0; h < H; ++h) {
            const auto& probs = lc.probs[static_cast<size_t>(h)];
            auto dctx_h = dctx.middleCols(h * dh, dh);
            auto qh = lc.q.middleCols(h * dh, dh);
            auto kh = lc.k.middleCols(h * dh, dh);
            auto vh = lc.v.middleCols(h * dh, dh);

            dv.middleCols(h * dh, dh).noalias() = probs.transpose() * dctx_h;
            Mat<Scalar> dprobs = dctx_h * vh.transpose();
            // Row-wise softmax backward; masked positions have probs == 0.
            Mat<Scalar> dscores(T, T);
            for (int t = 0; t < T; ++t) {
                auto p = probs.row(t);
                Scalar dot = dprobs.row(t).cwiseProduct(p).sum();
                dscores.row(t) = p.array() * (dprobs.row(t).array() - dot);
            }
            dq.middleCols(h * dh, dh).noalias() = (dscores * kh) * inv_sqrt_dh;
            dk.middleCols(h * dh, dh).noalias() = (dscores.transpose() * qh) * inv_sqrt_dh;
        }

        Mat<Scalar> dattn_normed = detail::project_backward<Scalar>(
            lc.attn_normed, layer.wq, adapter ? adapter->find(l, TensorKind::Wq) : nullptr, scale,
            dq, glayer ? &glayer->wq : nullptr, adapter_grad(l, TensorKind::Wq));
        dattn_normed += detail::project_backward<Scalar>(
            lc.attn_normed, layer.wk, adapter ? adapter->find(l, TensorKind::Wk) : nullptr, scale,
            dk, glayer ? &glayer->wk : nullptr, adapter_grad(l, TensorKind::Wk));
        dattn_normed += detail::project_backward<Scalar>(
            lc.attn_normed, layer.wv, adapter ? adapter->find(l, TensorKind::Wv) : nullptr, scale,
            dv, glayer ? &glayer->wv : nullptr, adapter_grad(l, TensorKind::Wv));
        dx += detail::rmsnorm_backward(lc.x_in, layer.attn_gain, lc.attn_inv, dattn_normed,
                                       glayer ? &glayer->attn_gain : nullptr);
    }

    if (gb) {
        for (int t = 0; t < T; ++t) {
            gb->tok_emb.row(cache.ids[static_cast<size_t>(t)]) += dx.row(t);
            gb->pos_emb.row(t) += dx.row(t);
        }
    }
}

}  // namespace mddlm::lm
