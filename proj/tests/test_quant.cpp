#include <doctest.h>

#include <filesystem>
#include <unistd.h>

#include "mddlm/lm/checkpoint.hpp"
#include "mddlm/lm/quant.hpp"

using namespace mddlm;
using namespace mddlm::lm;

TEST_CASE("constant tensors round-trip exactly") {
    Mat<float> zeros = Mat<float>::Zero(17, 9);
    auto qz = quantize(zeros);
    CHECK((dequantize<float>(qz) - zeros).cwiseAbs().maxCoeff() == 0.0f);
    for (float s : qz.scales) CHECK(s == 0.0f);

    Mat<float> constant = Mat<float>::Constant(13, 7, 0.375f);
    auto qc = quantize(constant);
    CHECK((dequantize<float>(qc) - constant).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("blockwise error bound: |x - xhat| <= absmax / 14 per block") {
    Rng rng(5);
    Mat<float> m(57, 23);  // deliberately not a multiple of the block size
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            m(r, c) = static_cast<float>(rng.normal(0.0, 1.5));
    auto q = quantize(m);
    auto back = dequantize<float>(q);

    const float* data = m.data();
    const float* rec = back.data();
    size_t n = q.numel();
    for (size_t blk = 0; blk < q.block_count(); ++blk) {
        size_t begin = blk * kQuantBlock;
        size_t end = std::min(begin + static_cast<size_t>(kQuantBlock), n);
        float absmax = 0.0f;
        for (size_t i = begin; i < end; ++i) absmax = std::max(absmax, std::abs(data[i]));
        for (size_t i = begin; i < end; ++i)
            CHECK(std::abs(data[i] - rec[i]) <= absmax / 14.0f + 1e-7f);
    }
    // codes stay in [-7, 7]
    for (size_t i = 0; i < n; ++i) {
        uint8_t byte = q.codes[i / 2];
        int nibble = (i % 2 == 0) ? (byte & 0x0F) : (byte >> 4);
        CHECK(nibble - 7 >= -7);
        CHECK(nibble - 7 <= 7);
    }
}

TEST_CASE("memory accounting for a 1024 x 1024 matrix") {
    Mat<float> m = Mat<float>::Constant(1024, 1024, 1.0f);
    auto q = quantize(m);
    CHECK(q.byte_size() == 589824);  // 524288 code bytes + 16384 * 4 scale bytes
    size_t dense = 1024u * 1024u * sizeof(float);
    CHECK(dense == 4194304);
    CHECK(static_cast<double>(q.byte_size()) / static_cast<double>(dense) <= 0.15);
}

TEST_CASE("quantized base params dequantize to a working model and report small bytes") {
    ModelConfig config;
    config.layers = 2;
    config.heads = 2;
    config.embed_dim = 16;
    config.mlp_dim = 32;
    config.context_len = 32;
    config.vocab_size = 40;
    auto params = init_params<float>(config, 5);
    auto q = quantize_base(params);
    CHECK(static_cast<double>(q.byte_size()) <=
          0.3 * static_cast<double>(params.byte_size()));

    auto deq = q.dequantize_all();
    std::vector<int> ids{1, 5, 9, 2};
    auto logits = forward<float>(deq, nullptr, ids);
    CHECK(logits.allFinite());
    // dequantized weights stay close to the originals
    CHECK((deq.layers[0].wq - params.layers[0].wq).cwiseAbs().maxCoeff() <= 0.01f);
}

TEST_CASE("quantized checkpoint round trip preserves codes and scales") {
    ModelConfig config;
    config.layers = 1;
    config.heads = 2;
    config.embed_dim = 16;
    config.mlp_dim = 32;
    config.context_len = 16;
    config.vocab_size = 30;
    auto params = init_params<float>(config, 6);
    auto q = quantize_base(params);
    std::string path = (std::filesystem::temp_directory_path() /
                        ("quant-" + std::to_string(::getpid()) + ".ckpt"))
                           .string();
    save_quantized(q, path);
    auto back = load_quantized<float>(path);
    CHECK(back.config == config);
    CHECK(back.tok_emb.codes == q.tok_emb.codes);
    CHECK(back.tok_emb.scales == q.tok_emb.scales);
    CHECK(back.layers[0].w2.codes == q.layers[0].w2.codes);
    auto a = q.dequantize_all();
    auto b = back.dequantize_all();
    CHECK((a.w_out - b.w_out).cwiseAbs().maxCoeff() == 0.0f);
    std::filesystem::remove(path);
}
