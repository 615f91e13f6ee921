#pragma once

#include <cstring>
#include <fstream>

#include "mddlm/lm/quant.hpp"

namespace mddlm::lm {

// Versioned binary container, little-endian:
//   magic "MDLMCKPT", u32 version, u8 kind (0 base / 1 adapter / 2 quantized)
//   config block (six u32: layers heads embed mlp context vocab)
//   adapter files add: u32 rank, f64 alpha
//   u32 tensor count, then per tensor:
//     u16 name length + name bytes, u8 dtype (0 f32 / 1 f64 / 2 q4),
//     u8 ndim, u32 dims..., payload
//       f32/f64: raw element bytes in storage order
//       q4: u32 scale count + f32 scales, u32 code bytes + packed codes
//   trailing u64 FNV-1a checksum over everything before it.

constexpr char kCkptMagic[8] = {'M', 'D', 'L', 'M', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCkptVersion = 1;

enum class CkptKind : uint8_t { Base = 0, Adapter = 1, Quantized = 2 };

namespace detail {

class ByteWriter {
public:
    std::string bytes;
    void raw(const void* p, size_t n) { bytes.append(static_cast<const char*>(p), n); }
    template <typename T>
    void scalar(T v) {
        raw(&v, sizeof(T));
    }
    void str(const std::string& s) {
        scalar<uint16_t>(static_cast<uint16_t>(s.size()));
        raw(s.data(), s.size());
    }
};

class ByteReader {
public:
    explicit ByteReader(const std::string& data) : data_(data) {}
    void raw(void* p, size_t n) {
        if (pos_ + n > data_.size()) throw DataError("checkpoint: truncated file");
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    template <typename T>
    T scalar() {
        T v;
        raw(&v, sizeof(T));
        return v;
    }
    std::string str() {
        uint16_t n = scalar<uint16_t>();
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    size_t pos() const { return pos_; }

private:
    const std::string& data_;
    size_t pos_ = 0;
};

template <typename Scalar>
constexpr uint8_t dtype_tag() {
    return sizeof(Scalar) == 4 ? 0 : 1;
}

template <typename Scalar>
void write_tensor(ByteWriter& w, const std::string& name, const Mat<Scalar>& m) {
    w.str(name);
    w.scalar<uint8_t>(dtype_tag<Scalar>());
    w.scalar<uint8_t>(2);
    w.scalar<uint32_t>(static_cast<uint32_t>(m.rows()));
    w.scalar<uint32_t>(static_cast<uint32_t>(m.cols()));
    w.raw(m.data(), static_cast<size_t>(m.size()) * sizeof(Scalar));
}

template <typename Scalar>
void read_tensor_into(ByteReader& r, Mat<Scalar>& out) {
    uint8_t dtype = r.scalar<uint8_t>();
    if (dtype != dtype_tag<Scalar>()) throw DataError("checkpoint: dtype mismatch");
    uint8_t ndim = r.scalar<uint8_t>();
    if (ndim != 2) throw DataError("checkpoint: expected 2-d tensor");
    uint32_t rows = r.scalar<uint32_t>();
    uint32_t cols = r.scalar<uint32_t>();
    out.resize(rows, cols);
    r.raw(out.data(), static_cast<size_t>(out.size()) * sizeof(Scalar));
}

inline void write_qtensor(ByteWriter& w, const std::string& name, const QuantizedTensor& q) {
    w.str(name);
    w.scalar<uint8_t>(2);
    w.scalar<uint8_t>(2);
    w.scalar<uint32_t>(static_cast<uint32_t>(q.rows));
    w.scalar<uint32_t>(static_cast<uint32_t>(q.cols));
    w.scalar<uint32_t>(static_cast<uint32_t>(q.scales.size()));
    w.raw(q.scales.data(), q.scales.size() * sizeof(float));
    w.scalar<uint32_t>(static_cast<uint32_t>(q.codes.size()));
    w.raw(q.codes.data(), q.codes.size());
}

inline void read_qtensor_into(ByteReader& r, QuantizedTensor& q) {
    uint8_t dtype = r.scalar<uint8_t>();
    if (dtype != 2) throw DataError("checkpoint: expected q4 tensor");
    uint8_t ndim = r.scalar<uint8_t>();
    if (ndim != 2) throw DataError("checkpoint: expected 2-d tensor");
    q.rows = static_cast<int>(r.scalar<uint32_t>());
    q.cols = static_cast<int>(r.scalar<uint32_t>());
    q.scales.resize(r.scalar<uint32_t>());
    r.raw(q.scales.data(), q.scales.size() * sizeof(float));
    q.codes.resize(r.scalar<uint32_t>());
    r.raw(q.codes.data(), q.codes.size());
}

inline void write_header(ByteWriter& w, CkptKind kind, const ModelConfig& c) {
    w.raw(kCkptMagic, sizeof(kCkptMagic));
    w.scalar<uint32_t>(kCkptVersion);
    w.scalar<uint8_t>(static_cast<uint8_t>(kind));
    for (int v : {c.layers, c.heads, c.embed_dim, c.mlp_dim, c.context_len, c.vocab_size})
        w.scalar<uint32_t>(static_cast<uint32_t>(v));
}

inline ModelConfig read_header(ByteReader& r, CkptKind expected) {
    char magic[8];
    r.raw(magic, sizeof(magic));
    if (std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
        throw DataError("checkpoint: bad magic");
    uint32_t version = r.scalar<uint32_t>();
    if (version != kCkptVersion)
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    uint8_t kind = r.scalar<uint8_t>();
    if (kind != static_cast<uint8_t>(expected)) throw DataError("checkpoint: wrong kind");
    ModelConfig c;
    c.layers = static_cast<int>(r.scalar<uint32_t>());
    c.heads = static_cast<int>(r.scalar<uint32_t>());
    c.embed_dim = static_cast<int>(r.scalar<uint32_t>());
    c.mlp_dim = static_cast<int>(r.scalar<uint32_t>());
    c.context_len = static_cast<int>(r.scalar<uint32_t>());
    c.vocab_size = static_cast<int>(r.scalar<uint32_t>());
    return c;
}

inline void finalize(ByteWriter& w, const std::string& path) {
    uint64_t checksum = fnv1a64(w.bytes);
    w.scalar<uint64_t>(checksum);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write(w.bytes.data(), static_cast<std::streamsize>(w.bytes.size()));
    if (!out) throw IoError("checkpoint write failed for " + path);
}

inline std::string load_checked(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() < sizeof(uint64_t)) throw DataError("checkpoint: truncated file");
    uint64_t stored;
    std::memcpy(&stored, data.data() + data.size() - sizeof(uint64_t), sizeof(uint64_t));
    std::string body = data.substr(0, data.size() - sizeof(uint64_t));
    if (fnv1a64(body) != stored) throw DataError("checkpoint: checksum mismatch in " + path);
    return body;
}

}  // namespace detail

template <typename Scalar>
void save_params(const ModelParams<Scalar>& params, const std::string& path) {
    detail::ByteWriter w;
    detail::write_header(w, CkptKind::Base, params.config);
    uint32_t count = 0;
    for_each_tensor(params,
                    [&](const std::string&, Eigen::Ref<const Mat<Scalar>>) { ++count; });
    w.scalar<uint32_t>(count);
    for_each_tensor(params, [&](const std::string& name, Eigen::Ref<const Mat<Scalar>> m) {
        detail::write_tensor<Scalar>(w, name, m);
    });
    detail::finalize(w, path);
}

template <typename Scalar>
ModelParams<Scalar> load_params(const std::string& path) {
    std::string body = detail::load_checked(path);
    detail::ByteReader r(body);
    ModelConfig config = detail::read_header(r, CkptKind::Base);
    config.validate();
    ModelParams<Scalar> params = init_params<Scalar>(config, 0);
    uint32_t count = r.scalar<uint32_t>();
    std::map<std::string, Mat<Scalar>> tensors;
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        Mat<Scalar> m;
        detail::read_tensor_into(r, m);
        tensors[name] = std::move(m);
    }
    for_each_tensor(params, [&](const std::string& name, Eigen::Ref<Mat<Scalar>> m) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw DataError("checkpoint: missing tensor " + name);
        if (it->second.rows() != m.rows() || it->second.cols() != m.cols())
            throw DataError("checkpoint: shape mismatch for " + name);
        m = it->second;
    });
    return params;
}

template <typename Scalar>
void save_adapter(const LoraAdapter<Scalar>& adapter, const ModelConfig& config,
                  const std::string& path) {
    detail::ByteWriter w;
    detail::write_header(w, CkptKind::Adapter, config);
    w.scalar<uint32_t>(static_cast<uint32_t>(adapter.rank));
    w.scalar<double>(adapter.alpha);
    w.scalar<uint32_t>(static_cast<uint32_t>(adapter.deltas.size() * 2));
    for (const auto& d : adapter.deltas) {
        detail::write_tensor<Scalar>(w, d.name() + ".a", d.a);
        detail::write_tensor<Scalar>(w, d.name() + ".b", d.b);
    }
    detail::finalize(w, path);
}

template <typename Scalar>
LoraAdapter<Scalar> load_adapter(const std::string& path, ModelConfig* config_out = nullptr) {
    std::string body = detail::load_checked(path);
    detail::ByteReader r(body);
    ModelConfig config = detail::read_header(r, CkptKind::Adapter);
    if (config_out) *config_out = config;
    LoraAdapter<Scalar> adapter;
    adapter.rank = static_cast<int>(r.scalar<uint32_t>());
    adapter.alpha = r.scalar<double>();
    uint32_t count = r.scalar<uint32_t>();
    if (count % 2 != 0) throw DataError("adapter checkpoint: odd tensor count");
    for (uint32_t i = 0; i < count; i += 2) {
        typename LoraAdapter<Scalar>::Delta d;
        std::string a_name = r.str();
        // "<place>.a" where place is "wout" or "layers.<l>.<kind>"
        std::string place = a_name.substr(0, a_name.size() - 2);
        if (place.rfind("layers.", 0) == 0) {
            size_t dot = place.find('.', 7);
            d.layer = std::stoi(place.substr(7, dot - 7));
            d.kind = tensor_kind_from_string(place.substr(dot + 1));
        } else {
            d.layer = -1;
            d.kind = tensor_kind_from_string(place);
        }
        detail::read_tensor_into(r, d.a);
        std::string b_name = r.str();
        if (b_name != place + ".b") throw DataError("adapter checkpoint: tensor order broken");
        detail::read_tensor_into(r, d.b);
        adapter.deltas.push_back(std::move(d));
    }
    return adapter;
}

template <typename Scalar>
void save_quantized(const QuantizedParams<Scalar>& q, const std::string& path) {
    detail::ByteWriter w;
    detail::write_header(w, CkptKind::Quantized, q.config);
    uint32_t count = static_cast<uint32_t>(3 + q.layers.size() * 8 + 1);
    w.scalar<uint32_t>(count);
    detail::write_qtensor(w, "tok_emb", q.tok_emb);
    detail::write_qtensor(w, "pos_emb", q.pos_emb);
    for (size_t l = 0; l < q.layers.size(); ++l) {
        std::string prefix = "layers." + std::to_string(l) + ".";
        detail::write_qtensor(w, prefix + "wq", q.layers[l].wq);
        detail::write_qtensor(w, prefix + "wk", q.layers[l].wk);
        detail::write_qtensor(w, prefix + "wv", q.layers[l].wv);
        detail::write_qtensor(w, prefix + "wo", q.layers[l].wo);
        detail::write_qtensor(w, prefix + "w1", q.layers[l].w1);
        detail::write_qtensor(w, prefix + "w2", q.layers[l].w2);
        Mat<Scalar> attn_gain = q.layers[l].attn_gain;
        Mat<Scalar> mlp_gain = q.layers[l].mlp_gain;
        detail::write_tensor<Scalar>(w, prefix + "attn_gain", attn_gain);
        detail::write_tensor<Scalar>(w, prefix + "mlp_gain", mlp_gain);
    }
    Mat<Scalar> final_gain = q.final_gain;
    detail::write_tensor<Scalar>(w, "final_gain", final_gain);
    detail::write_qtensor(w, "w_out", q.w_out);
    detail::finalize(w, path);
}

template <typename Scalar>
QuantizedParams<Scalar> load_quantized(const std::string& path) {
    std::string body = detail::load_checked(path);
    detail::ByteReader r(body);
    QuantizedParams<Scalar> q;
    q.config = detail::read_header(r, CkptKind::Quantized);
    q.config.validate();
    r.scalar<uint32_t>();  // tensor count implied by config
    auto expect = [&](const std::string& name) {
        std::string got = r.str();
        if (got != name) throw DataError("quantized checkpoint: expected " + name + ", got " + got);
    };
    expect("tok_emb");
    detail::read_qtensor_into(r, q.tok_emb);
    expect("pos_emb");
    detail::read_qtensor_into(r, q.pos_emb);
    q.layers.resize(static_cast<size_t>(q.config.layers));
    for (size_t l = 0; l < q.layers.size(); ++l) {
        std::string prefix = "layers." + std::to_string(l) + ".";
        expect(prefix + "wq");
        detail::read_qtensor_into(r, q.layers[l].wq);
        expect(prefix + "wk");
        detail::read_qtensor_into(r, q.layers[l].wk);
        expect(prefix + "wv");
        detail::read_qtensor_into(r, q.layers[l].wv);
        expect(prefix + "wo");
        detail::read_qtensor_into(r, q.layers[l].wo);
        expect(prefix + "w1");
        detail::read_qtensor_into(r, q.layers[l].w1);
        expect(prefix + "w2");
        detail::read_qtensor_into(r, q.layers[l].w2);
        Mat<Scalar> tmp;
        expect(prefix + "attn_gain");
        detail::read_tensor_into(r, tmp);
        q.layers[l].attn_gain = tmp;
        expect(prefix + "mlp_gain");
        detail::read_tensor_into(r, tmp);
        q.layers[l].mlp_gain = tmp;
    }
    Mat<Scalar> tmp;
    expect("final_gain");
    detail::read_tensor_into(r, tmp);
    q.final_gain = tmp;
    expect("w_out");
    detail::read_qtensor_into(r, q.w_out);
    return q;
}

}  // namespace mddlm::lm
