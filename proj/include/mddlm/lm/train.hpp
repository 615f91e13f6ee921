#pragma once

#include <numeric>

#include "mddlm/lm/backprop.hpp"
#include "mddlm/lm/tokenizer.hpp"
#include "mddlm/promptgen/promptgen.hpp"

namespace mddlm::lm {

struct TrainConfig {
    double peak_lr = 3e-4;
    double warmup_fraction = 0.1;
    double weight_decay = 0.1;
    int batch_size = 16;
    int epochs = 5;
    uint64_t seed = 0;
    double grad_clip = 1.0;
    // Decoupled-weight-decay optimizer moments.
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    int max_steps = -1;  // optional cap; -1 derives from epochs

    void validate() const {
        if (peak_lr <= 0.0 || batch_size < 1 || epochs < 1)
            throw ConfigError("TrainConfig: bad peak_lr/batch_size/epochs");
        if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
            throw ConfigError("TrainConfig: warmup_fraction outside [0,1)");
    }
};

/// Linear warmup to peak_lr, then linear decay toward zero at total_steps.
inline double lr_schedule(int step, int total_steps, double peak_lr, double warmup_fraction) {
    int warmup = std::max(1, static_cast<int>(std::lround(warmup_fraction * total_steps)));
    if (total_steps <= 1) return peak_lr;
    if (step < warmup) return peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
    if (warmup >= total_steps) return peak_lr;
    return peak_lr *
           (1.0 - static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup));
}

/// One tokenized training sequence: ids feed the model, targets are the
/// next-token labels, and mask selects the answer positions the loss covers.
struct TokenizedExample {
    std::vector<int> ids;
    std::vector<int> targets;
    std::vector<uint8_t> mask;
};

/// [BOS] prompt answer [EOS]; loss over the answer tokens and EOS only.
inline TokenizedExample make_example(const Tokenizer& tokenizer, const prompt::SftRecord& sft) {
    std::vector<int> full{Tokenizer::kBos};
    for (int id : tokenizer.encode(prompt::assemble_prompt(sft.instruction, sft.input)))
        full.push_back(id);
    size_t prompt_len = full.size();
    for (int id : tokenizer.encode(sft.output)) full.push_back(id);
    full.push_back(Tokenizer::kEos);

    TokenizedExample ex;
    ex.ids.assign(full.begin(), full.end() - 1);
    ex.targets.assign(full.begin() + 1, full.end());
    ex.mask.assign(ex.targets.size(), 0);
    for (size_t t = prompt_len - 1; t < ex.targets.size(); ++t) ex.mask[t] = 1;
    return ex;
}

inline std::vector<TokenizedExample> make_examples(const Tokenizer& tokenizer,
                                                   const std::vector<prompt::SftRecord>& corpus) {
    std::vector<TokenizedExample> out;
    out.reserve(corpus.size());
    for (const auto& sft : corpus) out.push_back(make_example(tokenizer, sft));
    return out;
}

struct TrainHistory {
    struct Step {
        int step = 0;
        double lr = 0;
        double loss = 0;
    };
    std::vector<Step> steps;
    std::vector<double> epoch_mean_loss;

    std::string to_csv() const {
        std::string out = "step,lr,loss\n";
        for (const auto& s : steps)
            out += std::to_string(s.step) + "," + format_shortest(s.lr) + "," +
                   format_shortest(s.loss) + "\n";
        return out;
    }
};

namespace detail {

template <typename Scalar>
struct AdamState {
    std::vector<Mat<Scalar>> m_a, v_a, m_b, v_b;
    explicit AdamState(const LoraAdapter<Scalar>& adapter) {
        for (const auto& d : adapter.deltas) {
            m_a.push_back(Mat<Scalar>::Zero(d.a.rows(), d.a.cols()));
            v_a.push_back(Mat<Scalar>::Zero(d.a.rows(), d.a.cols()));
            m_b.push_back(Mat<Scalar>::Zero(d.b.rows(), d.b.cols()));
            v_b.push_back(Mat<Scalar>::Zero(d.b.rows(), d.b.cols()));
        }
    }
};

/// Decoupled weight decay with bias-corrected first/second moments.
template <typename Scalar>
void adamw_update(Mat<Scalar>& param, const Mat<Scalar>& grad, Mat<Scalar>& m, Mat<Scalar>& v,
                  const TrainConfig& cfg, double lr, int t) {
    const Scalar b1 = static_cast<Scalar>(cfg.beta1);
    const Scalar b2 = static_cast<Scalar>(cfg.beta2);
    m = b1 * m + (Scalar(1) - b1) * grad;
    v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
    const Scalar corr1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(t));
    const Scalar corr2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(t));
    const Scalar lr_s = static_cast<Scalar>(lr);
    const Scalar eps = static_cast<Scalar>(cfg.eps);
    const Scalar wd = static_cast<Scalar>(cfg.weight_decay);
    param.array() -= lr_s * ((m.array() / corr1) /
                                 ((v.array() / corr2).sqrt() + eps) +
                             wd * param.array());
}

}  // namespace detail

/// Adapter-only supervised fine-tuning. Deterministic under (seed, corpus,
/// configs): fixed epoch shuffles, sequential per-example accumulation, and
/// ordered updates. Base weights are never written.
template <typename Scalar>
std::pair<LoraAdapter<Scalar>, TrainHistory> train_sft(const ModelParams<Scalar>& base,
                                                       const std::vector<TokenizedExample>& corpus,
                                                       const TrainConfig& train_config,
                                                       const LoraConfig& lora_config) {
    train_config.validate();
    if (corpus.empty()) throw DataError("train_sft: empty corpus");

    LoraAdapter<Scalar> adapter = lora_inject(base, lora_config, train_config.seed);
    detail::AdamState<Scalar> opt(adapter);

    const int n = static_cast<int>(corpus.size());
    const int steps_per_epoch = (n + train_config.batch_size - 1) / train_config.batch_size;
    int total_steps = train_config.epochs * steps_per_epoch;
    if (train_config.max_steps > 0) total_steps = std::min(total_steps, train_config.max_steps);

    TrainHistory history;
    int step = 0;
    for (int epoch = 0; epoch < train_config.epochs && step < total_steps; ++epoch) {
        std::vector<int> order(corpus.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(train_config.seed, "epoch-" + std::to_string(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_loss_sum = 0;
        size_t epoch_token_count = 0;
        for (int b = 0; b < steps_per_epoch && step < total_steps; ++b, ++step) {
            size_t begin = static_cast<size_t>(b) * train_config.batch_size;
            size_t end = std::min(begin + train_config.batch_size, corpus.size());

            size_t batch_tokens = 0;
            for (size_t i = begin; i < end; ++i) {
                const auto& ex = corpus[order[i]];
                batch_tokens += std::count(ex.mask.begin(), ex.mask.end(), uint8_t{1});
            }
            if (batch_tokens == 0) throw DataError("train_sft: batch with no unmasked tokens");

            Gradients<Scalar> grads = make_zero_gradients(base, &adapter);
            double batch_loss_sum = 0;
            try {
                for (size_t i = begin; i < end; ++i) {
                    const auto& ex = corpus[order[i]];
                    ForwardCache<Scalar> fwd_cache;
                    Mat<Scalar> logits = forward(base, &adapter, ex.ids, &fwd_cache);
                    auto [sum_nll, dlogits] = lm_loss_sum_grad(
                        logits, ex.targets, ex.mask, static_cast<double>(batch_tokens));
                    batch_loss_sum += static_cast<double>(sum_nll);
                    backward_accumulate(base, &adapter, fwd_cache, dlogits, grads);
                }
                grads.check_finite();
            } catch (const DataError& e) {
                throw DataError("train_sft: aborted at step " + std::to_string(step) + ": " +
                                e.what());
            }
            double batch_loss = batch_loss_sum / static_cast<double>(batch_tokens);
            if (!std::isfinite(batch_loss))
                throw DataError("train_sft: non-finite loss at step " + std::to_string(step));

            if (train_config.grad_clip > 0.0) {
                double gnorm = grads.norm();
                if (gnorm > train_config.grad_clip) {
                    Scalar factor = static_cast<Scalar>(train_config.grad_clip / gnorm);
                    for (auto& d : grads.adapter->deltas) {
                        d.a *= factor;
                        d.b *= factor;
                    }
                }
            }

            double lr = lr_schedule(step, total_steps, train_config.peak_lr,
                                    train_config.warmup_fraction);
            for (size_t di = 0; di < adapter.deltas.size(); ++di) {
                detail::adamw_update(adapter.deltas[di].a, grads.adapter->deltas[di].a,
                                     opt.m_a[di], opt.v_a[di], train_config, lr, step + 1);
                detail::adamw_update(adapter.deltas[di].b, grads.adapter->deltas[di].b,
                                     opt.m_b[di], opt.v_b[di], train_config, lr, step + 1);
            }
            history.steps.push_back({step, lr, batch_loss});
            epoch_loss_sum += batch_loss_sum;
            epoch_token_count += batch_tokens;
        }
        history.epoch_mean_loss.push_back(epoch_loss_sum /
                                          static_cast<double>(epoch_token_count));
    }
    return {std::move(adapter), std::move(history)};
}

// ---------------------------------------------------------------------------
// Greedy decoding
// ---------------------------------------------------------------------------

/// Argmax continuation (ties resolve to the lowest token id); stops at EOS, a
/// stop token, max_new tokens, or the context limit.
template <typename Scalar>
std::vector<int> decode_greedy(const ModelParams<Scalar>& params,
                               const LoraAdapter<Scalar>* adapter,
                               const std::vector<int>& prompt_ids, int max_new,
                               const std::vector<int>& stop_tokens = {}) {
    if (static_cast<int>(prompt_ids.size()) > params.config.context_len)
        throw DataError("decode_greedy: prompt exceeds context length");
    if (prompt_ids.empty()) throw DataError("decode_greedy: empty prompt");
    std::vector<int> seq = prompt_ids;
    std::vector<int> generated;
    for (int i = 0; i < max_new; ++i) {
        if (static_cast<int>(seq.size()) >= params.config.context_len) break;
        Mat<Scalar> logits = forward<Scalar>(params, adapter, seq);
        auto last = logits.row(logits.rows() - 1);
        int best = 0;
        for (int v = 1; v < last.size(); ++v)
            if (last(v) > last(best)) best = v;
        generated.push_back(best);
        seq.push_back(best);
        if (best == Tokenizer::kEos) break;
        if (std::find(stop_tokens.begin(), stop_tokens.end(), best) != stop_tokens.end()) break;
    }
    return generated;
}

}  // namespace mddlm::lm
