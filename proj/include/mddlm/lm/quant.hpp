#pragma once

#include <cstdint>

#include "mddlm/lm/model.hpp"

namespace mddlm::lm {

constexpr int kQuantBlock = 64;

/// 4-bit signed blockwise-absmax quantization. Elements are taken in storage
/// order (column-major) in blocks of 64; each block stores a float scale
/// (absmax / 7) and codes in [-7, 7] packed two per byte. Reconstruction
/// error per element is at most scale / 2. An all-zero block has scale 0 and
/// reconstructs exactly.
struct QuantizedTensor {
    int rows = 0, cols = 0;
    std::vector<float> scales;   // one per block
    std::vector<uint8_t> codes;  // packed nibbles (code + 7)

    size_t numel() const { return static_cast<size_t>(rows) * static_cast<size_t>(cols); }
    size_t block_count() const { return (numel() + kQuantBlock - 1) / kQuantBlock; }
    /// Stored payload bytes: packed codes plus per-block scales.
    size_t byte_size() const { return codes.size() + scales.size() * sizeof(float); }
};

template <typename Scalar>
QuantizedTensor quantize(const Mat<Scalar>& m) {
    QuantizedTensor q;
    q.rows = static_cast<int>(m.rows());
    q.cols = static_cast<int>(m.cols());
    size_t n = q.numel();
    q.scales.resize(q.block_count());
    q.codes.assign((n + 1) / 2, 0);
    const Scalar* data = m.data();
    for (size_t blk = 0; blk < q.scales.size(); ++blk) {
        size_t begin = blk * kQuantBlock;
        size_t end = std::min(begin + kQuantBlock, n);
        double absmax = 0.0;
        for (size_t i = begin; i < end; ++i)
            absmax = std::max(absmax, std::abs(static_cast<double>(data[i])));
        float scale = static_cast<float>(absmax / 7.0);
        q.scales[blk] = scale;
        for (size_t i = begin; i < end; ++i) {
            int code = 0;
            if (scale > 0.0f) {
                code = static_cast<int>(std::lround(static_cast<double>(data[i]) / scale));
                code = std::clamp(code, -7, 7);
            }
            uint8_t nibble = static_cast<uint8_t>(code + 7);
            if (i % 2 == 0)
                q.codes[i / 2] |= nibble;
            else
                q.codes[i / 2] |= static_cast<uint8_t>(nibble << 4);
        }
    }
    return q;
}

template <typename Scalar>
Mat<Scalar> dequantize(const QuantizedTensor& q) {
    Mat<Scalar> m(q.rows, q.cols);
    Scalar* data = m.data();
    size_t n = q.numel();
    for (size_t i = 0; i < n; ++i) {
        uint8_t byte = q.codes[i / 2];
        int nibble = (i % 2 == 0) ? (byte & 0x0F) : (byte >> 4);
        int code = nibble - 7;
        data[i] = static_cast<Scalar>(code) * static_cast<Scalar>(q.scales[i / kQuantBlock]);
    }
    return m;
}

/// Base model stored in 4-bit form. Norm gains stay in full precision (tiny
/// and scale-sensitive); their bytes are counted in byte_size.
template <typename Scalar>
struct QuantizedParams {
    ModelConfig config;
    QuantizedTensor tok_emb, pos_emb, w_out;
    struct Layer {
        QuantizedTensor wq, wk, wv, wo, w1, w2;
        Vec<Scalar> attn_gain, mlp_gain;
    };
    std::vector<Layer> layers;
    Vec<Scalar> final_gain;

    size_t byte_size() const {
        size_t n = tok_emb.byte_size() + pos_emb.byte_size() + w_out.byte_size();
        n += static_cast<size_t>(final_gain.size()) * sizeof(Scalar);
        for (const auto& l : layers) {
            n += l.wq.byte_size() + l.wk.byte_size() + l.wv.byte_size() + l.wo.byte_size() +
                 l.w1.byte_size() + l.w2.byte_size();
            n += (static_cast<size_t>(l.attn_gain.size()) +
                  static_cast<size_t>(l.mlp_gain.size())) *
                 sizeof(Scalar);
        }
        return n;
    }

    ModelParams<Scalar> dequantize_all() const {
        ModelParams<Scalar> p;
        p.config = config;
        p.tok_emb = dequantize<Scalar>(tok_emb);
        p.pos_emb = dequantize<Scalar>(pos_emb);
        p.w_out = dequantize<Scalar>(w_out);
        p.final_gain = final_gain;
        p.layers.resize(layers.size());
        for (size_t l = 0; l < layers.size(); ++l) {
            p.layers[l].wq = dequantize<Scalar>(layers[l].wq);
            p.layers[l].wk = dequantize<Scalar>(layers[l].wk);
            p.layers[l].wv = dequantize<Scalar>(layers[l].wv);
            p.layers[l].wo = dequantize<Scalar>(layers[l].wo);
            p.layers[l].w1 = dequantize<Scalar>(layers[l].w1);
            p.layers[l].w2 = dequantize<Scalar>(layers[l].w2);
            p.layers[l].attn_gain = layers[l].attn_gain;
            p.layers[l].mlp_gain = layers[l].mlp_gain;
        }
        return p;
    }
};

template <typename Scalar>
QuantizedParams<Scalar> quantize_base(const ModelParams<Scalar>& params) {
    QuantizedParams<Scalar> q;
    q.config = params.config;
    q.tok_emb = quantize(params.tok_emb);
    q.pos_emb = quantize(params.pos_emb);
    q.w_out = quantize(params.w_out);
    q.final_gain = params.final_gain;
    q.layers.resize(params.layers.size());
    for (size_t l = 0; l < params.layers.size(); ++l) {
        q.layers[l].wq = quantize(params.layers[l].wq);
        q.layers[l].wk = quantize(params.layers[l].wk);
        q.layers[l].wv = quantize(params.layers[l].wv);
        q.layers[l].wo = quantize(params.layers[l].wo);
        q.layers[l].w1 = quantize(params.layers[l].w1);
        q.layers[l].w2 = quantize(params.layers[l].w2);
        q.layers[l].attn_gain = params.layers[l].attn_gain;
        q.layers[l].mlp_gain = params.layers[l].mlp_gain;
    }
    return q;
}

}  // namespace mddlm::lm
