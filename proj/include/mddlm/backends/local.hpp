#pragma once

#include "mddlm/backends/backend.hpp"
#include "mddlm/lm/train.hpp"

namespace mddlm::backends {

/// In-process backend over the tiny decoder. Inference only; parameters are
/// shared read-only, so one instance is safe to use from multiple threads.
template <typename Scalar>
class LocalBackend : public Backend {
public:
    LocalBackend(const lm::ModelParams<Scalar>& params, const lm::LoraAdapter<Scalar>* adapter,
                 const lm::Tokenizer& tokenizer, std::string id = "local")
        : params_(params), adapter_(adapter), tokenizer_(tokenizer), id_(std::move(id)) {}

    std::string id() const override { return id_; }
    Capabilities capabilities() const override { return {true, true}; }

    double sequence_loglik(const std::string& prompt, const std::string& continuation) override {
        std::vector<int> ids{lm::Tokenizer::kBos};
        for (int id : tokenizer_.encode(prompt)) ids.push_back(id);
        size_t prompt_len = ids.size();
        std::vector<int> cont = tokenizer_.encode(continuation);
        if (cont.empty()) return 0.0;
        for (int id : cont) ids.push_back(id);

        // Teacher forcing: token at position p is predicted from the logits
        // row at p - 1.
        lm::Mat<Scalar> logits = lm::forward<Scalar>(params_, adapter_, ids);
        double sum = 0.0;
        for (size_t j = 0; j < cont.size(); ++j) {
            Eigen::Index row = static_cast<Eigen::Index>(prompt_len + j - 1);
            auto r = logits.row(row);
            Scalar m = r.maxCoeff();
            Scalar lse = m + std::log((r.array() - m).exp().sum());
            sum += static_cast<double>(r(cont[j]) - lse);
        }
        return sum;
    }

    std::string generate(const std::string& prompt, int max_new) override {
        std::vector<int> ids{lm::Tokenizer::kBos};
        for (int id : tokenizer_.encode(prompt)) ids.push_back(id);
        auto out = lm::decode_greedy<Scalar>(params_, adapter_, ids, max_new);
        return tokenizer_.decode(out);
    }

private:
    const lm::ModelParams<Scalar>& params_;
    const lm::LoraAdapter<Scalar>* adapter_;
    const lm::Tokenizer& tokenizer_;
    std::string id_;
};

}  // namespace mddlm::backends
